#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "zsbir/data.hpp"
#include "zsbir/model.hpp"

namespace zsbir {

struct RetrievalConfig {
  std::size_t candidates = 10;  // c: prior-sampled generations per query
  std::vector<std::size_t> k_values{10, 100};
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

// Scaled image features to retrieve from.
struct Database {
  std::vector<std::vector<double>> vectors;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return vectors.size(); }
};

// Full descending ranking for one query. Ties break by ascending database
// index so results are reproducible.
struct QueryResult {
  std::size_t query_id = 0;
  std::uint32_t label = 0;
  std::vector<std::size_t> ranked_indices;
  std::vector<double> scores;  // non-increasing
  std::vector<bool> relevant;  // aligned with ranked_indices
};

struct MetricsReport {
  std::vector<std::pair<std::size_t, double>> precision_at_k;
  double map_at_all = 0.0;
  std::vector<std::pair<std::size_t, double>> map_at_k;
  std::vector<double> per_query_ap;
  std::size_t query_count = 0;
  std::size_t database_size = 0;
  std::size_t candidates = 0;
  std::vector<std::string> warnings;
};

// u·v / (|u||v|); defined as 0 when either norm is 0.
double cosine(const std::vector<double>& u, const std::vector<double>& v);

// Max cosine similarity over `candidates` prior-sampled generations, per
// database image. Per-query candidate draws derive from mix(seed, query_id).
QueryResult score_query(const ModelBundle& bundle, std::size_t query_id, std::uint32_t label,
                        const std::vector<double>& sketch_scaled, const Database& database,
                        const RetrievalConfig& config);

// K above the database size clamps (sets *clamped).
double precision_at_k(const QueryResult& result, std::size_t k, bool* clamped = nullptr);

// cutoff 0 = no cutoff. Normalizer: total relevant, or min(total relevant,
// cutoff) when truncated. No relevant items: 0 (sets *no_relevant).
double average_precision(const QueryResult& result, std::size_t cutoff = 0,
                         bool* no_relevant = nullptr);

struct EvaluationOutput {
  MetricsReport metrics;
  std::vector<QueryResult> results;  // filled when keep_rankings
};

// Scores every query sketch against the database, in parallel over queries,
// merged deterministically by query id.
EvaluationOutput evaluate(const ModelBundle& bundle,
                          const std::vector<ScaledRecord>& query_sketches,
                          const Database& database, const RetrievalConfig& config,
                          bool keep_rankings = false);

std::string metrics_to_json(const MetricsReport& metrics, const std::string& fingerprint);
void dump_rankings_csv(const std::string& path, const std::vector<QueryResult>& results);

}  // namespace zsbir
