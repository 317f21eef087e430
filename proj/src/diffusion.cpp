#include "lidood/diffusion.hpp"

#include "lidood/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace lidood {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double std_normal_log_density(const Eigen::VectorXd& x) {
  return -0.5 * x.squaredNorm() - 0.5 * static_cast<double>(x.size()) * kLog2Pi;
}

}  // namespace

double VpSde::alpha(double t) const { return std::exp(-0.5 * (beta0 * t + 0.5 * beta1 * t * t)); }

double VpSde::sigma(double t) const {
  // 1 - alpha^2 = -expm1(-(beta0 t + beta1 t^2 / 2)), accurate for small t.
  return std::sqrt(-std::expm1(-(beta0 * t + 0.5 * beta1 * t * t)));
}

ScoreModel::ScoreModel(ScoreArch arch, std::uint64_t init_seed, VpSde sde)
    : arch_(std::move(arch)), sde_(sde) {
  if (arch_.d < 1) throw InvalidArgument("score model: d must be >= 1");
  if (arch_.time_embed_dim < 0 || arch_.time_embed_dim % 2 != 0)
    throw InvalidArgument("score model: time_embed_dim must be even and >= 0");
  if (!(sde_.beta0 > 0.0 && sde_.beta1 >= 0.0 && sde_.T > 0.0 && sde_.t_min > 0.0 &&
        sde_.t_min < sde_.T))
    throw InvalidArgument("score model: invalid VP-SDE constants");
  std::vector<int> widths{arch_.d + arch_.time_embed_dim};
  for (int h : arch_.hidden) {
    if (h < 1) throw InvalidArgument("score model: hidden widths must be >= 1");
    widths.push_back(h);
  }
  widths.push_back(arch_.d);
  net_ = Mlp(widths, Activation::silu);
  params_.assign(net_.num_params(), 0.0);
  Rng rng(init_seed);
  net_.init(params_, rng, true);
}

Eigen::VectorXd ScoreModel::time_embedding(double t) const {
  // Frequencies geometric from 1 to 1000 so that t in [1e-3, 1] is resolved.
  const int half = arch_.time_embed_dim / 2;
  Eigen::VectorXd emb(arch_.time_embed_dim);
  for (int i = 0; i < half; ++i) {
    const double freq = half > 1 ? std::pow(1000.0, static_cast<double>(i) / (half - 1)) : 1.0;
    emb(2 * i) = std::sin(freq * t);
    emb(2 * i + 1) = std::cos(freq * t);
  }
  return emb;
}

Eigen::MatrixXd ScoreModel::net_input(const Eigen::MatrixXd& x_cols, const Eigen::VectorXd& t) const {
  Eigen::MatrixXd in(arch_.d + arch_.time_embed_dim, x_cols.cols());
  in.topRows(arch_.d) = x_cols;
  for (Eigen::Index j = 0; j < x_cols.cols(); ++j)
    in.col(j).tail(arch_.time_embed_dim) = time_embedding(t(j));
  return in;
}

Eigen::MatrixXd ScoreModel::score(const Eigen::MatrixXd& x_cols, double t) const {
  return score(x_cols, Eigen::VectorXd::Constant(x_cols.cols(), t));
}

Eigen::MatrixXd ScoreModel::score(const Eigen::MatrixXd& x_cols, const Eigen::VectorXd& t) const {
  if (x_cols.rows() != arch_.d) throw InvalidArgument("score: dimension mismatch");
  Eigen::MatrixXd out = net_.forward(params_, net_input(x_cols, t));
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) /= sde_.sigma(t(j));
  return out;
}

double ScoreModel::divergence_exact(const Eigen::VectorXd& x, double t) const {
  const Eigen::Index d = arch_.d;
  const Eigen::MatrixXd in = net_input(x.replicate(1, d), Eigen::VectorXd::Constant(d, t));
  Eigen::MatrixXd tangents = Eigen::MatrixXd::Zero(in.rows(), d);
  tangents.topRows(d).setIdentity();
  const Eigen::MatrixXd jv = net_.jvp(params_, in, tangents);
  return jv.topRows(d).trace() / sde_.sigma(t);
}

double ScoreModel::divergence_hutchinson(const Eigen::VectorXd& x, double t, int n_probes,
                                         Rng& rng) const {
  if (n_probes < 1) throw InvalidArgument("hutchinson: need at least one probe");
  const Eigen::Index d = arch_.d;
  const Eigen::MatrixXd in = net_input(x.replicate(1, n_probes), Eigen::VectorXd::Constant(n_probes, t));
  Eigen::MatrixXd probes = Eigen::MatrixXd::Zero(in.rows(), n_probes);
  for (int j = 0; j < n_probes; ++j)
    for (Eigen::Index i = 0; i < d; ++i) probes(i, j) = rng.rademacher();
  const Eigen::MatrixXd jv = net_.jvp(params_, in, probes);
  const double total = (probes.topRows(d).array() * jv.topRows(d).array()).sum();
  return total / (static_cast<double>(n_probes) * sde_.sigma(t));
}

double ScoreModel::dsm_loss(const Eigen::MatrixXd& x0_cols, const Eigen::VectorXd& t,
                            const Eigen::MatrixXd& noise, std::span<double> grad) const {
  const Eigen::Index n = x0_cols.cols();
  Eigen::MatrixXd xt(arch_.d, n);
  Eigen::VectorXd weight(n);  // beta(t) / sigma(t)^2
  for (Eigen::Index j = 0; j < n; ++j) {
    const double sig = sde_.sigma(t(j));
    xt.col(j) = sde_.alpha(t(j)) * x0_cols.col(j) + sig * noise.col(j);
    weight(j) = sde_.beta(t(j)) / (sig * sig);
  }
  Mlp::Cache cache;
  const Eigen::MatrixXd out = net_.forward(params_, net_input(xt, t), &cache);
  // s = out / sigma and target = -noise / sigma, so
  // beta |s - target|^2 = beta / sigma^2 |out + noise|^2.
  const Eigen::MatrixXd resid = out + noise;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double loss = inv_n * (resid.colwise().squaredNorm().transpose().array() * weight.array()).sum();
  const Eigen::MatrixXd g_out = resid * (2.0 * inv_n * weight).asDiagonal();
  net_.backward(params_, cache, g_out, grad);
  return loss;
}

void LikelihoodConfig::validate() const {
  if (ode_steps < 1) throw InvalidArgument("likelihood: ode_steps must be >= 1");
  if (hutchinson_samples < 1) throw InvalidArgument("likelihood: hutchinson_samples must be >= 1");
}

LikelihoodConfig LikelihoodConfig::defaults_for(int d) {
  LikelihoodConfig cfg;
  cfg.trace = d <= 16 ? TraceMode::exact : TraceMode::hutchinson;
  return cfg;
}

void DmLidConfig::validate(int d, const VpSde& sde) const {
  if (!(t0 > 0.0 && t0 < sde.T)) throw InvalidArgument("dm_lid: need 0 < t0 < T");
  if (resolved_k(d) <= d) throw InvalidArgument("dm_lid: need k > d score probes");
  if (!(tau > 0.0)) throw InvalidArgument("dm_lid: tau must be positive");
}

TrainingReport dm_train(ScoreModel& model, const DataMatrix& data, const OptimizerConfig& opt,
                        std::uint64_t seed, AdamState* state) {
  if (data.dim() != model.dim())
    throw InvalidArgument("dm_train: data dimension " + std::to_string(data.dim()) +
                          " does not match model dimension " + std::to_string(model.dim()));
  AdamState local;
  AdamState& st = state ? *state : local;
  const Eigen::MatrixXd& pts = data.points;
  const VpSde& sde = model.sde();
  return run_adam(model.param_vector(), data.size(), opt, seed, st,
                  [&](std::span<const Eigen::Index> batch, Rng& rng, std::span<double> grad) {
                    const auto n = static_cast<Eigen::Index>(batch.size());
                    Eigen::MatrixXd x0(model.dim(), n), noise(model.dim(), n);
                    Eigen::VectorXd t(n);
                    for (Eigen::Index j = 0; j < n; ++j) {
                      x0.col(j) = pts.row(batch[static_cast<std::size_t>(j)]).transpose();
                      t(j) = rng.uniform(sde.t_min, sde.T);
                      for (Eigen::Index i = 0; i < model.dim(); ++i) noise(i, j) = rng.normal();
                    }
                    return model.dsm_loss(x0, t, noise, grad);
                  });
}

Eigen::MatrixXd reverse_sde(const ScoreModel& model, Eigen::MatrixXd y, int sde_steps, Rng& rng) {
  if (sde_steps < 1) throw InvalidArgument("dm_sample: sde_steps must be >= 1");
  const VpSde& sde = model.sde();
  const double h = (sde.T - sde.t_min) / sde_steps;
  for (int i = 0; i < sde_steps; ++i) {
    const double t = sde.T - i * h;
    const double beta = sde.beta(t);
    const Eigen::MatrixXd drift = beta * (model.score(y, t) + 0.5 * y);
    Eigen::MatrixXd noise(y.rows(), y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j)
      for (Eigen::Index k = 0; k < y.rows(); ++k) noise(k, j) = rng.normal();
    y += h * drift + std::sqrt(beta * h) * noise;
    if (!y.allFinite())
      throw NumericError("dm_sample: non-finite state at step " + std::to_string(i));
  }
  return y;
}

DataMatrix dm_sample(const ScoreModel& model, int n, int sde_steps, std::uint64_t seed) {
  if (n < 0) throw InvalidArgument("dm_sample: n must be >= 0");
  if (sde_steps < 1) throw InvalidArgument("dm_sample: sde_steps must be >= 1");
  Rng rng(seed);
  Eigen::MatrixXd y(model.dim(), n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < model.dim(); ++k) y(k, j) = rng.normal();
  DataMatrix out;
  out.seed = seed;
  out.points = reverse_sde(model, std::move(y), sde_steps, rng).transpose();
  return out;
}

double dm_log_prob(const ScoreModel& model, const Eigen::VectorXd& x, const LikelihoodConfig& cfg) {
  cfg.validate();
  if (x.size() != model.dim()) throw InvalidArgument("dm_log_prob: dimension mismatch");
  const VpSde& sde = model.sde();
  const double h = (sde.T - sde.t_min) / cfg.ode_steps;
  const double d = model.dim();
  Rng rng(cfg.seed);
  Eigen::VectorXd y = x;
  double integral = 0.0;
  for (int i = 0; i < cfg.ode_steps; ++i) {
    const double t = sde.t_min + i * h;
    const double beta = sde.beta(t);
    const Eigen::VectorXd s = model.score(y, t);
    const double div_s = cfg.trace == TraceMode::exact
                             ? model.divergence_exact(y, t)
                             : model.divergence_hutchinson(y, t, cfg.hutchinson_samples, rng);
    // Probability-flow drift -beta/2 (x + s) and its divergence.
    integral += h * (-0.5 * beta * (d + div_s));
    y += h * (-0.5 * beta * (y + s));
    if (!y.allFinite() || !std::isfinite(integral))
      throw NumericError("dm_log_prob: non-finite state at ODE step " + std::to_string(i));
  }
  return std_normal_log_density(y) + integral;
}

Eigen::VectorXd dm_score_spectrum(const ScoreFn& score, const VpSde& sde, const Eigen::VectorXd& x,
                                  const DmLidConfig& cfg, std::uint64_t seed) {
  const int d = static_cast<int>(x.size());
  if (!(cfg.t0 > 0.0 && cfg.t0 < sde.T)) throw InvalidArgument("dm_lid: need 0 < t0 < T");
  const int k = cfg.resolved_k(d);
  if (k <= d) throw InvalidArgument("dm_lid: need k > d score probes");
  Rng rng(seed);
  const double a = sde.alpha(cfg.t0);
  const double s = sde.sigma(cfg.t0);
  Eigen::MatrixXd xt(d, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < d; ++i) xt(i, j) = a * x(i) + s * rng.normal();
  Eigen::MatrixXd cols = score(xt, cfg.t0);
  if (cfg.drift_correction) cols += 0.5 * xt;
  if (!cols.allFinite()) throw NumericError("dm_lid: non-finite score");
  return singular_values_desc(cols);
}

Eigen::VectorXd dm_score_spectrum(const ScoreModel& model, const Eigen::VectorXd& x,
                                  const DmLidConfig& cfg, std::uint64_t seed) {
  if (x.size() != model.dim()) throw InvalidArgument("dm_lid: dimension mismatch");
  return dm_score_spectrum([&model](const Eigen::MatrixXd& xs, double t) { return model.score(xs, t); },
                           model.sde(), x, cfg, seed);
}

LidEstimate dm_lid(const ScoreFn& score, const VpSde& sde, const Eigen::VectorXd& x,
                   const DmLidConfig& cfg, std::uint64_t seed) {
  const int d = static_cast<int>(x.size());
  cfg.validate(d, sde);
  LidEstimate est;
  est.singular_values = dm_score_spectrum(score, sde, x, cfg, seed);
  est.tau = cfg.tau;
  est.lid = lid_from_spectrum(est.singular_values, cfg.tau, LidKind::corank_count, d);
  return est;
}

LidEstimate dm_lid(const ScoreModel& model, const Eigen::VectorXd& x, const DmLidConfig& cfg,
                   std::uint64_t seed) {
  return dm_lid([&model](const Eigen::MatrixXd& xs, double t) { return model.score(xs, t); },
                model.sde(), x, cfg, seed);
}

}  // namespace lidood
