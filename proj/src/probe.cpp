#include "dfcurate/probe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dfcurate/error.hpp"
#include "dfcurate/util.hpp"

namespace dfcurate {

namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) {
  if (t > 0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Objective over parameters theta = (w, b), optionally on affinely rescaled
// features x' = (x - shift) * scale.
class Objective {
 public:
  Objective(const LabeledDataset& pool, double C, bool penalize_bias,
            std::vector<double> shift = {}, std::vector<double> scale = {})
      : pool_(pool),
        dim_(pool.dim()),
        inv_c_(1.0 / C),
        penalize_bias_(penalize_bias),
        shift_(std::move(shift)),
        scale_(std::move(scale)),
        x_(dim_) {}

  std::size_t n_params() const { return dim_ + 1; }

  double margin(std::size_t i, std::span<const double> theta) {
    load(i);
    double z = theta[dim_];
    for (std::size_t j = 0; j < dim_; ++j) z += theta[j] * x_[j];
    return z;
  }

  double value(std::span<const double> theta) {
    double loss = 0.0;
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      const double s = pool_.target(i) ? 1.0 : -1.0;
      loss += softplus(-s * margin(i, theta));
    }
    return loss + penalty(theta);
  }

  // Returns the objective; fills grad and the per-sample Hessian weights.
  double value_grad(std::span<const double> theta, std::vector<double>& grad,
                    std::vector<double>* hess_weights = nullptr) {
    grad.assign(n_params(), 0.0);
    if (hess_weights) hess_weights->resize(pool_.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      const double s = pool_.target(i) ? 1.0 : -1.0;
      const double z = margin(i, theta);
      loss += softplus(-s * z);
      // d/dz softplus(-s z) = -s * sigmoid(-s z)
      const double coeff = -s * sigmoid(-s * z);
      for (std::size_t j = 0; j < dim_; ++j) grad[j] += coeff * x_[j];
      grad[dim_] += coeff;
      if (hess_weights) {
        const double p = sigmoid(z);
        (*hess_weights)[i] = p * (1.0 - p);
      }
    }
    for (std::size_t j = 0; j < dim_; ++j) grad[j] += inv_c_ * theta[j];
    if (penalize_bias_) grad[dim_] += inv_c_ * theta[dim_];
    return loss + penalty(theta);
  }

  void hess_vec(std::span<const double> weights, std::span<const double> v, std::vector<double>& out) {
    out.assign(n_params(), 0.0);
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const double u = weights[i] * margin(i, v);
      for (std::size_t j = 0; j < dim_; ++j) out[j] += u * x_[j];
      out[dim_] += u;
    }
    for (std::size_t j = 0; j < dim_; ++j) out[j] += inv_c_ * v[j];
    if (penalize_bias_) out[dim_] += inv_c_ * v[dim_];
  }

  void hess_diag(std::span<const double> weights, std::vector<double>& out) {
    out.assign(n_params(), 0.0);
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      load(i);
      for (std::size_t j = 0; j < dim_; ++j) out[j] += weights[i] * x_[j] * x_[j];
      out[dim_] += weights[i];
    }
    for (std::size_t j = 0; j < dim_; ++j) out[j] += inv_c_;
    if (penalize_bias_) out[dim_] += inv_c_;
  }

 private:
  void load(std::size_t i) {
    const auto row = pool_.features(i);
    if (shift_.empty()) {
      for (std::size_t j = 0; j < dim_; ++j) x_[j] = row[j];
    } else {
      for (std::size_t j = 0; j < dim_; ++j) x_[j] = (row[j] - shift_[j]) * scale_[j];
    }
  }

  double penalty(std::span<const double> theta) const {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) sq += theta[j] * theta[j];
    if (penalize_bias_) sq += theta[dim_] * theta[dim_];
    return 0.5 * inv_c_ * sq;
  }

  const LabeledDataset& pool_;
  std::size_t dim_;
  double inv_c_;
  bool penalize_bias_;
  std::vector<double> shift_;
  std::vector<double> scale_;
  std::vector<double> x_;
};

// Preconditioned CG on H p = -g, truncated at relative residual `forcing`.
std::vector<double> newton_direction(Objective& obj, std::span<const double> weights,
                                     const std::vector<double>& grad, double forcing) {
  const std::size_t n = grad.size();
  std::vector<double> diag;
  obj.hess_diag(weights, diag);
  for (double& d : diag) d = d > 0 ? 1.0 / d : 1.0;

  std::vector<double> p(n, 0.0), r(n), z(n), dir(n), hd;
  for (std::size_t j = 0; j < n; ++j) r[j] = -grad[j];
  for (std::size_t j = 0; j < n; ++j) z[j] = diag[j] * r[j];
  dir = z;
  double rz = dot(r, z);
  const double target = forcing * std::sqrt(dot(grad, grad));
  const std::size_t max_cg = std::min<std::size_t>(2 * n + 10, 2000);

  for (std::size_t k = 0; k < max_cg; ++k) {
    if (std::sqrt(dot(r, r)) <= target) break;
    obj.hess_vec(weights, dir, hd);
    const double curv = dot(dir, hd);
    if (!(curv > 1e-300)) break;
    const double alpha = rz / curv;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] += alpha * dir[j];
      r[j] -= alpha * hd[j];
    }
    for (std::size_t j = 0; j < n; ++j) z[j] = diag[j] * r[j];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t j = 0; j < n; ++j) dir[j] = z[j] + beta * dir[j];
  }
  if (dot(p, grad) >= 0.0) {
    // CG produced nothing usable; fall back to preconditioned steepest descent.
    for (std::size_t j = 0; j < n; ++j) p[j] = -diag[j] * grad[j];
  }
  return p;
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void validate_options(const TrainOptions& opts) {
  if (!(opts.C > 0) || !std::isfinite(opts.C)) throw Error(ErrorCode::kInvalidArgument, "C must be positive");
  if (!(opts.tol > 0)) throw Error(ErrorCode::kInvalidArgument, "tol must be positive");
  if (opts.max_iter < 1) throw Error(ErrorCode::kInvalidArgument, "max_iter must be >= 1");
}

std::uint64_t options_hash(const TrainOptions& opts) {
  std::ostringstream s;
  s.precision(17);
  s << "C=" << opts.C << ";tol=" << opts.tol << ";max_iter=" << opts.max_iter
    << ";penalize_bias=" << opts.penalize_bias << ";standardize=" << opts.standardize;
  return fnv1a64(s.str());
}

ProbeModel train(const LabeledDataset& pool, const TrainOptions& opts) {
  validate_options(opts);
  if (pool.empty()) throw Error(ErrorCode::kEmptyPool, "cannot train on an empty pool");
  if (!pool.has_both_classes()) {
    throw Error(ErrorCode::kSingleClass, "training pool needs both bonafide and spoof samples");
  }
  const std::size_t dim = pool.dim();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (float v : pool.features(i)) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite feature in '" + pool.id(i) + "'");
    }
  }

  std::vector<double> shift, scale;
  if (opts.standardize) {
    shift.assign(dim, 0.0);
    scale.assign(dim, 0.0);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto row = pool.features(i);
      for (std::size_t j = 0; j < dim; ++j) shift[j] += row[j];
    }
    for (double& m : shift) m /= static_cast<double>(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto row = pool.features(i);
      for (std::size_t j = 0; j < dim; ++j) scale[j] += (row[j] - shift[j]) * (row[j] - shift[j]);
    }
    for (double& s : scale) {
      const double sd = std::sqrt(s / static_cast<double>(pool.size()));
      s = sd > 0 ? 1.0 / sd : 1.0;
    }
  }

  Objective obj(pool, opts.C, opts.penalize_bias, shift, scale);
  std::vector<double> theta(dim + 1, 0.0), grad, weights, trial(dim + 1);
  double f = obj.value_grad(theta, grad, &weights);
  const double sqrt_tol = std::sqrt(opts.tol);

  bool converged = false;
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const double gnorm = inf_norm(grad);
    if (gnorm <= 1e-12 * (1.0 + std::abs(f))) {
      converged = true;
      break;
    }
    const double forcing = std::min(0.5, std::sqrt(std::sqrt(dot(grad, grad))));
    const std::vector<double> p = newton_direction(obj, weights, grad, forcing);
    const double slope = dot(p, grad);

    // Armijo backtracking from the full Newton step.
    double step = 1.0;
    double f_trial = f;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      for (std::size_t j = 0; j <= dim; ++j) trial[j] = theta[j] + step * p[j];
      f_trial = obj.value(trial);
      if (std::isfinite(f_trial) && f_trial <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No representable decrease left along the Newton direction.
      converged = gnorm <= sqrt_tol * (1.0 + std::abs(f));
      break;
    }
    theta.swap(trial);
    const double f_prev = f;
    f = obj.value_grad(theta, grad, &weights);
    if (std::abs(f_prev - f) <= opts.tol * std::abs(f) &&
        inf_norm(grad) <= sqrt_tol * (1.0 + std::abs(f))) {
      ++iter;
      converged = true;
      break;
    }
  }

  ProbeModel model;
  model.C = opts.C;
  model.w.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(dim));
  model.b = theta[dim];
  if (opts.standardize) {
    // w'.((x - mu) * s) + b  ==  (w' * s).x + (b - sum w' * s * mu)
    for (std::size_t j = 0; j < dim; ++j) {
      model.w[j] = theta[j] * scale[j];
      model.b -= model.w[j] * shift[j];
    }
  }
  model.converged = converged;
  model.iterations = iter;
  model.objective = f;
  model.pool_description = pool.description();
  model.pool_size = pool.size();
  model.options_hash = hex64(options_hash(opts));
  return model;
}

double decision(const ProbeModel& model, std::span<const float> x) {
  if (x.size() != model.w.size()) {
    throw Error(ErrorCode::kDimMismatch, "feature dim " + std::to_string(x.size()) + " vs model dim " +
                                             std::to_string(model.w.size()));
  }
  double z = model.b;
  for (std::size_t j = 0; j < x.size(); ++j) z += model.w[j] * x[j];
  return z;
}

std::vector<double> decisions(const ProbeModel& model, const LabeledDataset& pool) {
  if (!pool.empty() && pool.dim() != model.dim()) {
    throw Error(ErrorCode::kDimMismatch, "pool dim " + std::to_string(pool.dim()) + " vs model dim " +
                                             std::to_string(model.dim()));
  }
  std::vector<double> out(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) out[i] = decision(model, pool.features(i));
  return out;
}

LossAndGrad loss_and_grad(const ProbeModel& model, const LabeledDataset& pool, const TrainOptions& opts) {
  validate_options(opts);
  if (pool.dim() != model.dim()) {
    throw Error(ErrorCode::kDimMismatch, "pool dim " + std::to_string(pool.dim()) + " vs model dim " +
                                             std::to_string(model.dim()));
  }
  Objective obj(pool, opts.C, opts.penalize_bias);
  std::vector<double> theta(model.w);
  theta.push_back(model.b);
  LossAndGrad out;
  out.loss = obj.value_grad(theta, out.grad);
  return out;
}

std::string model_to_json(const ProbeModel& model) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(model.w.size() * 8);
  for (double v : model.w) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<std::uint8_t>((bits >> (8 * k)) & 0xFF));
  }
  nlohmann::ordered_json j;
  j["format"] = "dfcurate-probe";
  j["version"] = 1;
  j["dim"] = model.w.size();
  j["C"] = model.C;
  j["b"] = model.b;
  j["w_dtype"] = "float64le";
  j["w"] = base64_encode(bytes);
  j["converged"] = model.converged;
  j["iterations"] = model.iterations;
  j["objective"] = model.objective;
  j["meta"] = {{"pool", model.pool_description},
               {"pool_size", model.pool_size},
               {"options_hash", model.options_hash}};
  return j.dump(2);
}

ProbeModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("model file: ") + e.what());
  }
  try {
    if (j.at("format") != "dfcurate-probe") throw Error(ErrorCode::kFormat, "not a probe model file");
    if (j.at("version") != 1) throw Error(ErrorCode::kFormat, "unsupported model version");
    ProbeModel m;
    const std::size_t dim = j.at("dim").get<std::size_t>();
    const auto bytes = base64_decode(j.at("w").get<std::string>());
    if (bytes.size() != dim * 8) throw Error(ErrorCode::kCountMismatch, "model weight length does not match dim");
    m.w.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[8 * i + k]) << (8 * k);
      m.w[i] = std::bit_cast<double>(bits);
    }
    m.C = j.at("C").get<double>();
    m.b = j.at("b").get<double>();
    m.converged = j.value("converged", false);
    m.iterations = j.value("iterations", 0);
    m.objective = j.value("objective", 0.0);
    if (j.contains("meta")) {
      const auto& meta = j["meta"];
      m.pool_description = meta.value("pool", std::string());
      m.pool_size = meta.value("pool_size", std::uint64_t{0});
      m.options_hash = meta.value("options_hash", std::string());
    }
    for (double v : m.w) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite model weight");
    }
    if (!std::isfinite(m.b)) throw Error(ErrorCode::kNonFinite, "non-finite model bias");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("model file: ") + e.what());
  }
}

void save_model(const ProbeModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out << model_to_json(model) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

ProbeModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return model_from_json(s.str());
}

}  // namespace dfcurate
