#include "ctnreg/dnn.hpp"

#include "ctnreg/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace ctnreg {

namespace {

void require(bool ok, ErrorKind kind, const std::string& msg) {
  if (!ok) throw Error(kind, msg);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

void check_inputs(const MlpParams& theta, const Matrix& x) {
  require(x.cols() == theta.inputs(), ErrorKind::kInvalidInput,
          "network expects " + std::to_string(theta.inputs()) + " inputs but x has " +
              std::to_string(x.cols()) + " columns");
}

}  // namespace

// ---------------------------------------------------------------------------

MlpParams MlpParams::zeros(const std::vector<Index>& sizes) {
  require(sizes.size() >= 2, ErrorKind::kInvalidInput, "network needs at least input and output sizes");
  MlpParams p;
  p.sizes = sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    require(sizes[l] >= 1 && sizes[l + 1] >= 1, ErrorKind::kInvalidInput, "layer sizes must be positive");
    p.weights.push_back(Matrix::Zero(sizes[l + 1], sizes[l]));
    p.biases.push_back(Vector::Zero(sizes[l + 1]));
  }
  return p;
}

Index MlpParams::parameter_count() const {
  Index count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) count += weights[l].size() + biases[l].size();
  return count;
}

Vector MlpParams::flatten() const {
  Vector flat(parameter_count());
  Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.segment(at, weights[l].size()) = weights[l].reshaped();
    at += weights[l].size();
    flat.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
  return flat;
}

void MlpParams::assign(const Vector& flat) {
  require(flat.size() == parameter_count(), ErrorKind::kInvalidInput, "parameter vector has wrong length");
  Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].reshaped() = flat.segment(at, weights[l].size());
    at += weights[l].size();
    biases[l] = flat.segment(at, biases[l].size());
    at += biases[l].size();
  }
}

void MlpParams::validate() const {
  require(sizes.size() >= 2 && weights.size() == sizes.size() - 1 && biases.size() == weights.size(),
          ErrorKind::kInvalidInput, "network layer count is inconsistent");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    require(weights[l].rows() == sizes[l + 1] && weights[l].cols() == sizes[l] &&
                biases[l].size() == sizes[l + 1],
            ErrorKind::kInvalidInput, "layer " + std::to_string(l) + " does not chain");
    require(weights[l].allFinite() && biases[l].allFinite(), ErrorKind::kNumericalFailure,
            "layer " + std::to_string(l) + " has non-finite parameters");
  }
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (sizes != other.sizes || weights.size() != other.weights.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

MlpParams init_mlp(const std::vector<Index>& sizes, std::uint64_t seed) {
  MlpParams p = MlpParams::zeros(sizes);
  std::mt19937_64 rng(seed);
  for (auto& w : p.weights) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
    }
  }
  return p;
}

std::vector<Index> layer_sizes(Index inputs, const std::vector<Index>& hidden, Index outputs) {
  std::vector<Index> sizes{inputs};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(outputs);
  return sizes;
}

Matrix mlp_forward(const MlpParams& theta, const Matrix& x) {
  check_inputs(theta, x);
  Matrix a = x;
  for (std::size_t l = 0; l < theta.layers(); ++l) {
    Matrix z = a * theta.weights[l].transpose();
    z.rowwise() += theta.biases[l].transpose();
    a = l + 1 < theta.layers() ? Matrix(z.cwiseMax(0.0)) : z;
  }
  return a;
}

double mlp_batch_objective(const MlpParams& theta, const Matrix& x, const Matrix& y,
                           const Matrix& xi, double mu, std::span<const Index> rows,
                           Vector* grad) {
  check_inputs(theta, x);
  require(y.rows() == x.rows() && y.cols() == theta.outputs(), ErrorKind::kInvalidInput,
          "labels must be n x c");
  require(!rows.empty(), ErrorKind::kInvalidInput, "empty batch");
  const bool penalised = mu != 0.0;
  if (penalised) {
    require(xi.rows() == x.rows() && xi.cols() == theta.outputs(), ErrorKind::kInvalidInput,
            "xi must be n x c");
  }
  const double b = static_cast<double>(rows.size());
  const double scale = static_cast<double>(x.rows()) / b;

  std::vector<Matrix> acts;
  acts.reserve(theta.layers() + 1);
  acts.push_back(gather_rows(x, rows));
  for (std::size_t l = 0; l < theta.layers(); ++l) {
    Matrix z = acts.back() * theta.weights[l].transpose();
    z.rowwise() += theta.biases[l].transpose();
    acts.push_back(l + 1 < theta.layers() ? Matrix(z.cwiseMax(0.0)) : z);
  }
  const Matrix& logits = acts.back();
  const Matrix yb = gather_rows(y, rows);

  const Vector row_max = logits.rowwise().maxCoeff();
  Matrix shifted = logits.colwise() - row_max;
  const Vector log_norm = shifted.array().exp().rowwise().sum().log();
  double value = (log_norm.sum() - (yb.array() * shifted.array()).sum()) / b;

  Matrix diff;
  if (penalised) {
    diff = logits - gather_rows(xi, rows);
    value += scale * 0.5 * mu * diff.squaredNorm();
  }
  if (!std::isfinite(value)) throw Error(ErrorKind::kNumericalFailure, "network objective is not finite");
  if (grad == nullptr) return value;

  shifted.colwise() -= log_norm;
  Matrix dz = (shifted.array().exp().matrix() - yb) / b;
  if (penalised) dz += scale * mu * diff;

  grad->resize(theta.parameter_count());
  std::vector<Index> offsets(theta.layers());
  Index at = 0;
  for (std::size_t l = 0; l < theta.layers(); ++l) {
    offsets[l] = at;
    at += theta.weights[l].size() + theta.biases[l].size();
  }
  for (std::size_t l = theta.layers(); l-- > 0;) {
    const Matrix gw = dz.transpose() * acts[l];
    grad->segment(offsets[l], gw.size()) = gw.reshaped();
    grad->segment(offsets[l] + gw.size(), theta.biases[l].size()) = dz.colwise().sum().transpose();
    if (l > 0) {
      Matrix da = dz * theta.weights[l];
      dz = (acts[l].array() > 0.0).select(da, 0.0);
    }
  }
  return value;
}

double theta_objective(const MlpParams& theta, const Matrix& x, const Matrix& y,
                       const Matrix& xi, double mu) {
  const auto rows = all_rows(x.rows());
  return mlp_batch_objective(theta, x, y, xi, mu, rows, nullptr);
}

// ---------------------------------------------------------------------------

void PenaltyState::validate(Index samples) const {
  theta.validate();
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::kInvalidInput, "lambda must be >= 0");
  require(mu >= 0.0 && std::isfinite(mu), ErrorKind::kInvalidInput, "mu must be >= 0");
  require(xi.rows() == samples && xi.cols() == theta.outputs(), ErrorKind::kInvalidInput,
          "xi must be n x c");
  require(xi.allFinite(), ErrorKind::kNumericalFailure, "xi has non-finite entries");
}

PenaltyComponents penalty_objective(const PenaltyState& state, const Matrix& x, const Matrix& y,
                                    const ConcatNuclearNorm* coupling) {
  state.validate(x.rows());
  PenaltyComponents out;
  out.loss = theta_objective(state.theta, x, y, state.xi, 0.0);
  out.coupling = coupling != nullptr ? coupling->value(state.xi) : nuclear_norm(hconcat(x, state.xi));
  out.penalty = 0.5 * (mlp_forward(state.theta, x) - state.xi).squaredNorm();
  out.total = out.loss + state.lambda * out.coupling + state.mu * out.penalty;
  return out;
}

ThetaStepResult theta_step(const PenaltyState& state, const Matrix& x, const Matrix& y,
                           const ThetaStepConfig& cfg) {
  state.validate(x.rows());
  require(cfg.max_retries >= 0 && cfg.eps_mono >= 0.0, ErrorKind::kInvalidInput,
          "theta step: invalid retry policy");
  ThetaStepResult out;
  out.objective_before = theta_objective(state.theta, x, y, state.xi, state.mu);

  MlpParams work = state.theta;
  const BatchObjective objective = [&](const Vector& p, std::span<const Index> batch, Vector& g) {
    work.assign(p);
    return mlp_batch_objective(work, x, y, state.xi, state.mu, batch, &g);
  };

  SgdConfig sgd = cfg.sgd;
  for (int attempt = 0;; ++attempt) {
    out.theta = state.theta;
    out.retries = attempt;
    try {
      const SgdResult run = sgd_momentum(objective, state.theta.flatten(), x.rows(), sgd);
      out.theta.assign(run.params);
      out.theta.validate();
      out.objective_after = theta_objective(out.theta, x, y, state.xi, state.mu);
    } catch (const Error& e) {
      // A diverged run counts as a failed attempt.
      if (e.kind() != ErrorKind::kNumericalFailure) throw;
      out.theta = state.theta;
      out.objective_after = std::numeric_limits<double>::infinity();
    }
    if (out.objective_after <= out.objective_before + cfg.eps_mono) return out;
    if (attempt == cfg.max_retries) break;
    sgd.learning_rate *= 0.5;
  }
  out.violation = true;
  if (!std::isfinite(out.objective_after)) {
    // Every attempt diverged: keep the starting parameters.
    out.theta = state.theta;
    out.objective_after = out.objective_before;
  }
  return out;
}

double xi_objective(const ConcatNuclearNorm& coupling, const Matrix& f, const Matrix& xi,
                    double lambda, double mu) {
  const double fit = 0.5 * mu * (f - xi).squaredNorm();
  return lambda == 0.0 ? fit : lambda * coupling.value(xi) + fit;
}

XiStepResult xi_step(const PenaltyState& state, const ConcatNuclearNorm& coupling, const Matrix& f,
                     const XiStepConfig& cfg) {
  require(f.rows() == state.xi.rows() && f.cols() == state.xi.cols(), ErrorKind::kInvalidInput,
          "xi step: logits and xi shapes differ");
  require(coupling.samples() == f.rows(), ErrorKind::kInvalidInput, "xi step: sample count mismatch");
  require(state.mu > 0.0, ErrorKind::kInvalidInput, "xi step: mu must be > 0");
  const double lambda = state.lambda;
  const double mu = state.mu;

  XiStepResult out;
  out.objective_warm = xi_objective(coupling, f, state.xi, lambda, mu);
  if (lambda == 0.0) {
    out.xi = f;
    out.objective_final = 0.0;
    out.report.initial_objective = out.objective_warm;
    out.report.best_objective = 0.0;
    out.report.stop_reason = StopReason::kGradTol;
    return out;
  }

  const SmoothObjective h = [&](const Matrix& xi) {
    ConcatSubgradient g = coupling.value_and_subgrad(xi);
    return ValueAndGrad{lambda * g.value + 0.5 * mu * (f - xi).squaredNorm(),
                        lambda * g.subgrad + mu * (xi - f)};
  };
  SubgradConfig sub;
  sub.grad_tol = cfg.grad_tol;
  sub.max_iters = cfg.max_iters;
  sub.step_scale = cfg.step_scale > 0.0 ? cfg.step_scale : 1.0 / mu;
  SubgradResult run = subgradient_descent(h, state.xi, sub);
  out.report = run.report;

  Matrix best = std::move(run.best);
  double best_value = run.report.best_objective;
  const double at_f = xi_objective(coupling, f, f, lambda, mu);
  if (at_f < best_value) {
    best = f;
    best_value = at_f;
  }

  const Matrix d = best - state.xi;
  const double dd = d.squaredNorm();
  out.xi = std::move(best);
  out.objective_final = best_value;
  if (dd > 0.0) {
    const double t = std::min(1.0, 0.5 + (out.objective_warm - best_value) / (mu * dd));
    if (t < 1.0) {
      out.xi = state.xi + t * d;
      out.objective_final = xi_objective(coupling, f, out.xi, lambda, mu);
      out.damping = t;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void AltMinConfig::validate() const {
  require(lambda > 0.0 && mu > 0.0 && std::isfinite(lambda) && std::isfinite(mu),
          ErrorKind::kInvalidInput, "alternating minimisation needs lambda > 0 and mu > 0");
  require(outer_iters >= 1 && outer_tol_scale > 0.0 && sgd.epochs >= 1 && max_retries >= 0,
          ErrorKind::kInvalidInput, "alternating minimisation: invalid budgets");
}

AltMinResult alternating_minimize(const Matrix& x, const Matrix& y, const AltMinConfig& cfg) {
  cfg.validate();
  require(x.rows() == y.rows() && x.rows() >= 1 && y.cols() >= 2, ErrorKind::kInvalidInput,
          "alternating minimisation: need matching n >= 1 and c >= 2");
  require_finite(x, "x");

  const Index n = x.rows();
  const Index c = y.cols();
  const ConcatNuclearNorm coupling(x);

  AltMinResult out;
  PenaltyState& state = out.state;
  AltMinReport& rep = out.report;
  state.theta = init_mlp(layer_sizes(x.cols(), cfg.hidden, c), cfg.seed);
  state.xi = Matrix::Zero(n, c);
  state.lambda = cfg.lambda;
  state.mu = cfg.mu;

  double current = penalty_objective(state, x, y, &coupling).total;
  state.objective_history.push_back(current);
  rep.eps_mono = 1e-6 * (1.0 + std::abs(current));
  rep.outer_tol = cfg.outer_tol_scale * std::sqrt(static_cast<double>(n * c));

  ThetaStepConfig theta_cfg;
  theta_cfg.sgd = cfg.sgd;
  theta_cfg.sgd.schedule_epochs = cfg.outer_iters * cfg.sgd.epochs;
  theta_cfg.eps_mono = rep.eps_mono;
  theta_cfg.max_retries = cfg.max_retries;

  for (int k = 0; k < cfg.outer_iters; ++k) {
    theta_cfg.sgd.epoch_offset = k * cfg.sgd.epochs;
    theta_cfg.sgd.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k) + 1);
    ThetaStepResult ts = theta_step(state, x, y, theta_cfg);
    rep.theta_retries += ts.retries;
    if (ts.violation) ++rep.theta_violations;
    state.theta = std::move(ts.theta);

    const Matrix f = mlp_forward(state.theta, x);
    XiStepResult xs = xi_step(state, coupling, f, cfg.xi);
    const double change = (xs.xi - state.xi).norm();
    state.xi = std::move(xs.xi);
    state.outer_iter = k + 1;

    const double next = penalty_objective(state, x, y, &coupling).total;
    state.objective_history.push_back(next);
    rep.xi_change.push_back(change);
    rep.descent_margin.push_back(current - next - 0.5 * cfg.mu * change * change);
    current = next;
    rep.outer_iterations = k + 1;
    if (change <= rep.outer_tol) {
      rep.converged = true;
      break;
    }
  }
  rep.objective_history = state.objective_history;
  return out;
}

SgdTrainResult train_mlp_sgd(const Matrix& x, const Matrix& y, const SgdTrainConfig& cfg) {
  require(x.rows() == y.rows() && x.rows() >= 1 && y.cols() >= 2, ErrorKind::kInvalidInput,
          "sgd training: need matching n >= 1 and c >= 2");
  require_finite(x, "x");
  SgdTrainResult out;
  out.theta = init_mlp(layer_sizes(x.cols(), cfg.hidden, y.cols()), cfg.sgd.seed);
  MlpParams work = out.theta;
  const Matrix no_xi;
  const BatchObjective objective = [&](const Vector& p, std::span<const Index> batch, Vector& g) {
    work.assign(p);
    return mlp_batch_objective(work, x, y, no_xi, 0.0, batch, &g);
  };
  SgdConfig sgd = cfg.sgd;
  sgd.seed = derive_seed(cfg.sgd.seed, 0);
  SgdResult run = sgd_momentum(objective, out.theta.flatten(), x.rows(), sgd);
  out.theta.assign(run.params);
  out.epoch_losses = std::move(run.epoch_losses);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "ctnreg-mlp";
constexpr int kCheckpointVersion = 1;

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void write_f64(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  for (double v : values) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  out.flush();
  require(static_cast<bool>(out), ErrorKind::kIo, "write to " + path.string() + " failed");
}

std::vector<double> read_f64(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  require(bytes == count * sizeof(double), ErrorKind::kIo,
          path.string() + ": expected " + std::to_string(count * sizeof(double)) + " bytes, found " +
              std::to_string(bytes));
  in.seekg(0);
  std::vector<double> values(count);
  for (double& v : values) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof(bits));
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  require(static_cast<bool>(in), ErrorKind::kIo, "read from " + path.string() + " failed");
  return values;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint) {
  const MlpParams& theta = checkpoint.theta;
  theta.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["version"] = kCheckpointVersion;
  manifest["layer_sizes"] = theta.sizes;
  manifest["activation"] = "relu";
  manifest["seed"] = checkpoint.seed;
  manifest["hyperparameters"] = checkpoint.hyperparameters;
  manifest["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < theta.layers(); ++l) {
    const std::string w_name = "layer" + std::to_string(l) + "_weight.f64";
    const std::string b_name = "layer" + std::to_string(l) + "_bias.f64";
    const Matrix& w = theta.weights[l];
    std::vector<double> w_rows;
    w_rows.reserve(static_cast<std::size_t>(w.size()));
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) w_rows.push_back(w(i, j));
    }
    write_f64(dir / w_name, w_rows);
    write_f64(dir / b_name, std::vector<double>(theta.biases[l].begin(), theta.biases[l].end()));
    manifest["layers"].push_back({{"weight", w_name},
                                  {"weight_shape", {w.rows(), w.cols()}},
                                  {"weight_order", "row-major"},
                                  {"bias", b_name},
                                  {"bias_length", theta.biases[l].size()}});
  }
  std::ofstream out(dir / "manifest.json");
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  require(static_cast<bool>(out), ErrorKind::kIo, "write to manifest failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
    require(manifest.at("format") == kCheckpointFormat, ErrorKind::kIo, "not a network checkpoint");
    require(manifest.at("version") == kCheckpointVersion, ErrorKind::kIo, "unsupported checkpoint version");
    Checkpoint cp;
    cp.theta = MlpParams::zeros(manifest.at("layer_sizes").get<std::vector<Index>>());
    cp.seed = manifest.value("seed", std::uint64_t{0});
    if (manifest.contains("hyperparameters")) {
      cp.hyperparameters = manifest["hyperparameters"].get<std::map<std::string, double>>();
    }
    const auto& layers = manifest.at("layers");
    require(layers.size() == cp.theta.layers(), ErrorKind::kIo, "checkpoint layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix& w = cp.theta.weights[l];
      const auto shape = layers[l].at("weight_shape").get<std::vector<Index>>();
      require(shape.size() == 2 && shape[0] == w.rows() && shape[1] == w.cols(), ErrorKind::kIo,
              "checkpoint weight shape mismatch in layer " + std::to_string(l));
      const auto wv = read_f64(dir / layers[l].at("weight").get<std::string>(),
                               static_cast<std::size_t>(w.size()));
      std::size_t at = 0;
      for (Index i = 0; i < w.rows(); ++i) {
        for (Index j = 0; j < w.cols(); ++j) w(i, j) = wv[at++];
      }
      Vector& b = cp.theta.biases[l];
      const auto bv = read_f64(dir / layers[l].at("bias").get<std::string>(),
                               static_cast<std::size_t>(b.size()));
      for (Index i = 0; i < b.size(); ++i) b(i) = bv[static_cast<std::size_t>(i)];
    }
    cp.theta.validate();
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, "malformed checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace ctnreg
