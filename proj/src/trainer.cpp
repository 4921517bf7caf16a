#include "zsbir/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace zsbir {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (kl_mc_samples < 1) throw ConfigError("train config: kl_mc_samples must be >= 1");
  weights.validate();
}

Trainer::Trainer(ModelBundle& bundle, const TrainConfig& config)
    : bundle_(bundle),
      config_(config),
      opt_r_(bundle.regressor_params().tensors()),
      opt_eg_([&bundle] {
        auto params = bundle.encoder_params().tensors();
        for (auto& t : bundle.generator_params().tensors()) params.push_back(t);
        return params;
      }()),
      rng_(Rng::mix(config.seed, 0x747261696eULL)) {
  config_.validate();
  current_lr_ = config_.schedule.at(0);
}

LossReport Trainer::train_step(const Tensor& a, const Tensor& x, bool verify_partition) {
  const std::size_t batch = x.extent(0);
  const std::size_t latent = bundle_.config().latent_dim;
  LossReport report;

  auto require_finite = [](double value, const char* term) {
    if (!std::isfinite(value)) {
      throw NumericError(std::string("train_step: non-finite loss term '") + term + "'");
    }
  };

  // ---- phase 1: regressor (Eq. 7) -------------------------------------
  bundle_.encoder_params().zero_grad();
  bundle_.generator_params().zero_grad();
  bundle_.regressor_params().zero_grad();

  Tensor x_generated;
  {
    // the generated stream is a constant input to the regressor
    NoGradGuard no_grad;
    FlowSample sample = bundle_.posterior_sample(bundle_.encode(x), rng_);
    x_generated = bundle_.decode(sample.zT, a);
  }
  RegressorLossParts parts =
      regressor_loss(bundle_.regress(x), a, bundle_.regress(x_generated), a, config_.weights);
  report.l_sup = parts.l_sup.value();
  report.l_unsup = parts.l_unsup.value();
  report.total_regressor = parts.total.value();
  require_finite(report.l_sup, "l_sup");
  require_finite(report.l_unsup, "l_unsup");
  parts.total.backward();
  if (verify_partition) {
    if (!bundle_.encoder_params().all_grads_zero() ||
        !bundle_.generator_params().all_grads_zero()) {
      throw ContractError("train_step: regressor phase leaked gradients into theta_E/theta_G");
    }
  }
  opt_r_.step(current_lr_);

  // ---- phase 2: encoder + generator (Eq. 11) ---------------------------
  bundle_.encoder_params().zero_grad();
  bundle_.generator_params().zero_grad();
  bundle_.regressor_params().zero_grad();

  Tensor total_generator;
  {
    FreezeGuard freeze(bundle_.regressor_params());

    PosteriorParams posterior = bundle_.encode(x);
    Tensor eps = Tensor::from_data({batch, latent}, rng_.normal_vec(batch * latent));
    FlowSample sample = bundle_.posterior_sample(posterior, eps);
    Tensor recon = reconstruction_loss(bundle_.decode(sample.zT, a), x);

    Tensor kl;
    if (bundle_.config().flow_steps > 0) {
      kl = kl_flow_mc(sample, bundle_.prior());
      for (std::size_t extra = 1; extra < config_.kl_mc_samples; ++extra) {
        Tensor eps_k = Tensor::from_data({batch, latent}, rng_.normal_vec(batch * latent));
        kl = add(kl, kl_flow_mc(bundle_.posterior_sample(posterior, eps_k), bundle_.prior()));
      }
      if (config_.kl_mc_samples > 1) {
        kl = mul_scalar(kl, 1.0 / static_cast<double>(config_.kl_mc_samples));
      }
    } else if (latent > 0) {
      kl = kl_gaussian_closed_form(posterior.mu0, posterior.sigma0,
                                   bundle_.config().prior_stddev());
    } else {
      kl = Tensor::scalar(0.0);
    }
    Tensor total_vae = add(recon, mul_scalar(kl, config_.weights.beta));

    // Eq. 8 and Eq. 9 share one prior draw and one decoder pass
    Tensor z_prior = bundle_.prior().sample(batch, latent, rng_);
    Tensor x_hat_prior = bundle_.decode(z_prior, a);
    Tensor l_c = reconstruction_loss(bundle_.regress(x_hat_prior), a);
    Tensor l_reg = reconstruction_loss(x_hat_prior, x);
    Tensor l_e = latent_consistency_loss(bundle_, x_hat_prior);

    total_generator = generator_total(total_vae, l_c, l_reg, l_e, config_.weights);

    report.recon = recon.value();
    report.kl = kl.value();
    report.l_c = l_c.value();
    report.l_reg = l_reg.value();
    report.l_e = l_e.value();
    report.total_vae = total_vae.value();
    report.total_generator = total_generator.value();
    require_finite(report.recon, "recon");
    require_finite(report.kl, "kl");
    require_finite(report.l_c, "l_c");
    require_finite(report.l_reg, "l_reg");
    require_finite(report.l_e, "l_e");

    total_generator.backward();
  }
  if (verify_partition && !bundle_.regressor_params().all_grads_zero()) {
    throw ContractError("train_step: generator phase leaked gradients into theta_R");
  }
  opt_eg_.step(current_lr_);

  return report;
}

std::vector<EpochStats> Trainer::fit(const PairSet& pairs,
                                     const std::function<void(const EpochStats&)>& on_epoch,
                                     std::optional<std::size_t> stop_after_epochs) {
  const std::size_t last_epoch =
      stop_after_epochs ? std::min(*stop_after_epochs, config_.epochs) : config_.epochs;
  if (pairs.pairs.empty() && last_epoch > epochs_done_) {
    throw DataError("fit: empty pair set");
  }
  std::vector<EpochStats> log;
  const std::size_t n = pairs.pairs.size();
  const std::size_t attr_dim = bundle_.config().attr_dim;
  const std::size_t feature_dim = bundle_.config().feature_dim;

  for (std::size_t epoch = epochs_done_; epoch < last_epoch; ++epoch) {
    current_lr_ = config_.schedule.at(epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = current_lr_;
    double weight_total = 0.0;

    for (std::size_t start = 0; start < n; start += config_.batch_size) {
      const std::size_t batch = std::min(config_.batch_size, n - start);
      std::vector<double> a_data(batch * attr_dim);
      std::vector<double> x_data(batch * feature_dim);
      for (std::size_t r = 0; r < batch; ++r) {
        const SketchImagePair& pair = pairs.pairs[order[start + r]];
        if (pair.sketch.size() != attr_dim || pair.image.size() != feature_dim) {
          throw DataError("fit: pair width mismatch against the model configuration");
        }
        std::copy(pair.sketch.begin(), pair.sketch.end(),
                  a_data.begin() + static_cast<std::ptrdiff_t>(r * attr_dim));
        std::copy(pair.image.begin(), pair.image.end(),
                  x_data.begin() + static_cast<std::ptrdiff_t>(r * feature_dim));
      }
      Tensor a = Tensor::from_data({batch, attr_dim}, std::move(a_data));
      Tensor x = Tensor::from_data({batch, feature_dim}, std::move(x_data));

      const bool verify = config_.check_partition && start == 0;
      LossReport r = train_step(a, x, verify);

      const double w = static_cast<double>(batch);
      stats.losses.recon += w * r.recon;
      stats.losses.kl += w * r.kl;
      stats.losses.l_sup += w * r.l_sup;
      stats.losses.l_unsup += w * r.l_unsup;
      stats.losses.l_c += w * r.l_c;
      stats.losses.l_reg += w * r.l_reg;
      stats.losses.l_e += w * r.l_e;
      stats.losses.total_vae += w * r.total_vae;
      stats.losses.total_regressor += w * r.total_regressor;
      stats.losses.total_generator += w * r.total_generator;
      weight_total += w;
    }

    for (double* field :
         {&stats.losses.recon, &stats.losses.kl, &stats.losses.l_sup, &stats.losses.l_unsup,
          &stats.losses.l_c, &stats.losses.l_reg, &stats.losses.l_e, &stats.losses.total_vae,
          &stats.losses.total_regressor, &stats.losses.total_generator}) {
      *field /= weight_total;
    }

    epochs_done_ = epoch + 1;
    if (on_epoch) on_epoch(stats);
    log.push_back(std::move(stats));
  }
  return log;
}

// ---- checkpointing -----------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'Z', 'S', 'C', 'K'};

template <typename T>
void put(std::ostream& os, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw ParseError(path + ": truncated checkpoint");
  }
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& path) {
  const auto len = get<std::uint32_t>(is, path);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (is.gcount() != static_cast<std::streamsize>(len)) {
    throw ParseError(path + ": truncated checkpoint string");
  }
  return s;
}

void put_doubles(std::ostream& os, const std::vector<double>& values) {
  put<std::uint64_t>(os, values.size());
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& is, const std::string& path) {
  const auto n = get<std::uint64_t>(is, path);
  std::vector<double> values(n);
  is.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(n * sizeof(double))) {
    throw ParseError(path + ": truncated checkpoint data block");
  }
  return values;
}

void put_indices(std::ostream& os, const std::vector<std::size_t>& values) {
  put<std::uint64_t>(os, values.size());
  for (auto v : values) put<std::uint64_t>(os, v);
}

std::vector<std::size_t> get_indices(std::istream& is, const std::string& path) {
  const auto n = get<std::uint64_t>(is, path);
  std::vector<std::size_t> values(n);
  for (auto& v : values) v = static_cast<std::size_t>(get<std::uint64_t>(is, path));
  return values;
}

std::vector<const ParameterSet*> all_sets(const ModelBundle& bundle) {
  return {&bundle.encoder_params(), &bundle.generator_params(), &bundle.regressor_params()};
}

void put_adam(std::ostream& os, const Adam& opt) {
  put<std::uint64_t>(os, opt.step_count());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(opt.size()));
  for (std::size_t i = 0; i < opt.size(); ++i) {
    put_doubles(os, opt.moment1(i));
    put_doubles(os, opt.moment2(i));
  }
}

void get_adam(std::istream& is, const std::string& path, Adam& opt) {
  opt.set_step_count(get<std::uint64_t>(is, path));
  const auto count = get<std::uint32_t>(is, path);
  if (count != opt.size()) {
    throw ConfigError(path + ": optimizer slot count " + std::to_string(count) +
                      " does not match the model (" + std::to_string(opt.size()) + ")");
  }
  for (std::size_t i = 0; i < opt.size(); ++i) {
    auto m = get_doubles(is, path);
    auto v = get_doubles(is, path);
    if (m.size() != opt.moment1(i).size() || v.size() != opt.moment2(i).size()) {
      throw ConfigError(path + ": optimizer moment shape mismatch at slot " + std::to_string(i));
    }
    opt.moment1(i) = std::move(m);
    opt.moment2(i) = std::move(v);
  }
}

void put_scaling_side(std::ostream& os, const std::vector<double>& lo,
                      const std::vector<double>& range, const std::vector<std::size_t>& degen) {
  put_doubles(os, lo);
  put_doubles(os, range);
  put_indices(os, degen);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle, const Trainer& trainer,
                     const ScalingParams& scaling, std::uint64_t fingerprint) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kCheckpointMagic, 4);
  put<std::uint16_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, fingerprint);
  put<std::uint64_t>(os, trainer.epochs_done());
  put_string(os, trainer.rng().serialize());

  std::uint32_t param_count = 0;
  for (const auto* set : all_sets(bundle)) {
    param_count += static_cast<std::uint32_t>(set->params().size());
  }
  put<std::uint32_t>(os, param_count);
  for (const auto* set : all_sets(bundle)) {
    for (const auto& p : set->params()) {
      put_string(os, p.name);
      const auto& shape = p.tensor.shape();
      put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
      for (auto d : shape) put<std::uint64_t>(os, d);
      put_doubles(os, p.tensor.data());
    }
  }

  put_adam(os, trainer.regressor_opt());
  put_adam(os, trainer.generator_opt());

  put_scaling_side(os, scaling.image_min, scaling.image_range, scaling.degenerate_image);
  put_scaling_side(os, scaling.sketch_min, scaling.sketch_range, scaling.degenerate_sketch);
  if (!os) throw IoError("write failed: " + path);
}

ScalingParams load_checkpoint(const std::string& path, ModelBundle& bundle, Trainer* trainer,
                              std::uint64_t expected_fingerprint) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw ParseError(path + ": not a checkpoint file (bad magic)");
  }
  const auto version = get<std::uint16_t>(is, path);
  if (version != kCheckpointVersion) {
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto fingerprint = get<std::uint64_t>(is, path);
  if (fingerprint != expected_fingerprint) {
    throw ConfigError(path + ": config fingerprint mismatch (checkpoint " +
                      std::to_string(fingerprint) + ", current " +
                      std::to_string(expected_fingerprint) + ")");
  }
  const auto epoch = get<std::uint64_t>(is, path);
  const std::string rng_state = get_string(is, path);

  const auto param_count = get<std::uint32_t>(is, path);
  std::vector<NamedParam> expected;
  for (const auto* set : all_sets(bundle)) {
    for (const auto& p : set->params()) expected.push_back(p);
  }
  if (param_count != expected.size()) {
    throw ConfigError(path + ": parameter count " + std::to_string(param_count) +
                      " does not match the model (" + std::to_string(expected.size()) + ")");
  }
  for (auto& slot : expected) {
    const std::string name = get_string(is, path);
    if (name != slot.name) {
      throw ConfigError(path + ": parameter '" + name + "' where '" + slot.name +
                        "' was expected");
    }
    const auto rank = get<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, path));
    if (shape != slot.tensor.shape()) {
      throw ConfigError(path + ": parameter '" + name + "' has shape " + shape_str(shape) +
                        ", model wants " + shape_str(slot.tensor.shape()));
    }
    auto values = get_doubles(is, path);
    if (values.size() != slot.tensor.numel()) {
      throw ParseError(path + ": parameter '" + name + "' data size mismatch");
    }
    slot.tensor.mutable_data() = std::move(values);
  }

  if (trainer != nullptr) {
    get_adam(is, path, trainer->regressor_opt());
    get_adam(is, path, trainer->generator_opt());
    trainer->set_epochs_done(static_cast<std::size_t>(epoch));
    trainer->set_rng(Rng::deserialize(rng_state));
  } else {
    // skip the optimizer section
    for (int opt = 0; opt < 2; ++opt) {
      get<std::uint64_t>(is, path);
      const auto count = get<std::uint32_t>(is, path);
      for (std::uint32_t i = 0; i < count; ++i) {
        get_doubles(is, path);
        get_doubles(is, path);
      }
    }
  }

  ScalingParams scaling;
  scaling.image_min = get_doubles(is, path);
  scaling.image_range = get_doubles(is, path);
  scaling.degenerate_image = get_indices(is, path);
  scaling.sketch_min = get_doubles(is, path);
  scaling.sketch_range = get_doubles(is, path);
  scaling.degenerate_sketch = get_indices(is, path);
  return scaling;
}

std::uint64_t peek_checkpoint_fingerprint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw ParseError(path + ": not a checkpoint file (bad magic)");
  }
  get<std::uint16_t>(is, path);
  return get<std::uint64_t>(is, path);
}

}  // namespace zsbir
