#include "lidood/flow.hpp"

#include "lidood/errors.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <string>

namespace lidood {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
  return out;
}

void check_finite(const Eigen::MatrixXd& m, std::size_t block) {
  if (!m.allFinite())
    throw NumericError("non-finite value in coupling block " + std::to_string(block));
}

// Conditioner outputs for a batch: bounded log-scale, its derivative factor, and shift.
struct Coupling {
  Eigen::ArrayXXd s;      // |B| x N
  Eigen::ArrayXXd dsdr;   // ds/draw
  Eigen::ArrayXXd shift;  // |B| x N
};

Coupling split_output(const Eigen::MatrixXd& out, Eigen::Index nb) {
  Coupling c;
  const Eigen::ArrayXXd th = (out.topRows(nb).array() / kLogScaleBound).tanh();
  c.s = kLogScaleBound * th;
  c.dsdr = 1.0 - th.square();
  c.shift = out.bottomRows(nb).array();
  return c;
}

}  // namespace

Eigen::VectorXd singular_values_desc(const Eigen::MatrixXd& m) {
  // JacobiSVD returns singular values in decreasing order.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues();
}

FlowModel::FlowModel(FlowArch arch, std::uint64_t init_seed) : arch_(arch) {
  if (arch.d < 1) throw InvalidArgument("flow: d must be >= 1");
  if (arch.n_blocks < 1) throw InvalidArgument("flow: n_blocks must be >= 1");
  if (arch.hidden_width < 1) throw InvalidArgument("flow: hidden_width must be >= 1");
  std::size_t offset = 0;
  for (int k = 0; k < arch.n_blocks; ++k) {
    Block b;
    for (int i = 0; i < arch.d; ++i) (i % 2 == k % 2 ? b.trans : b.cond).push_back(i);
    if (!b.trans.empty()) {
      const int nb = static_cast<int>(b.trans.size());
      b.net = Mlp({static_cast<int>(b.cond.size()), arch.hidden_width, arch.hidden_width, 2 * nb},
                  Activation::tanh);
    }
    b.offset = offset;
    offset += b.trans.empty() ? 0 : b.net.num_params();
    blocks_.push_back(std::move(b));
  }
  params_.assign(offset, 0.0);
  shift_ = Eigen::VectorXd::Zero(arch.d);
  Rng rng(init_seed);
  for (const auto& b : blocks_)
    if (!b.trans.empty())
      b.net.init(std::span<double>(params_).subspan(b.offset, b.net.num_params()), rng, true);
}

void FlowModel::set_normalization(Eigen::VectorXd shift, double scale) {
  if (shift.size() != arch_.d) throw InvalidArgument("flow: normalisation shift has wrong size");
  if (!(scale > 0.0) || !std::isfinite(scale) || !shift.allFinite())
    throw InvalidArgument("flow: normalisation must be finite with positive scale");
  shift_ = std::move(shift);
  scale_ = scale;
}

void FlowModel::fit_normalization(const Eigen::MatrixXd& x_rows) {
  if (x_rows.cols() != arch_.d || x_rows.rows() < 2)
    throw InvalidArgument("flow: need at least two points of matching dimension");
  const Eigen::VectorXd mean = x_rows.colwise().mean().transpose();
  const double var = (x_rows.rowwise() - mean.transpose()).squaredNorm() /
                     static_cast<double>(x_rows.rows() * arch_.d);
  set_normalization(mean, var > 0.0 ? std::sqrt(var) : 1.0);
}

Eigen::VectorXd FlowModel::forward(const Eigen::VectorXd& z) const {
  if (z.size() != arch_.d) throw InvalidArgument("flow_forward: dimension mismatch");
  Eigen::VectorXd y = z;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::MatrixXd out = b.net.forward(p, gather(y, b.cond));
    const auto c = split_output(out, static_cast<Eigen::Index>(b.trans.size()));
    for (std::size_t i = 0; i < b.trans.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      y(b.trans[i]) = y(b.trans[i]) * std::exp(c.s(r, 0)) + c.shift(r, 0);
    }
    check_finite(y, k);
  }
  return scale_ * y + shift_;
}

Eigen::VectorXd FlowModel::inverse(const Eigen::VectorXd& x) const {
  if (x.size() != arch_.d) throw InvalidArgument("flow inverse: dimension mismatch");
  Eigen::VectorXd z = (x - shift_) / scale_;
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::MatrixXd out = b.net.forward(p, gather(z, b.cond));
    const auto c = split_output(out, static_cast<Eigen::Index>(b.trans.size()));
    for (std::size_t i = 0; i < b.trans.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      z(b.trans[i]) = (z(b.trans[i]) - c.shift(r, 0)) * std::exp(-c.s(r, 0));
    }
    check_finite(z, k);
  }
  return z;
}

double FlowModel::log_prob(const Eigen::VectorXd& x) const {
  if (x.size() != arch_.d) throw InvalidArgument("flow_log_prob: dimension mismatch");
  Eigen::VectorXd z = (x - shift_) / scale_;
  double log_det = arch_.d * std::log(scale_);
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::MatrixXd out = b.net.forward(p, gather(z, b.cond));
    const auto c = split_output(out, static_cast<Eigen::Index>(b.trans.size()));
    for (std::size_t i = 0; i < b.trans.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      z(b.trans[i]) = (z(b.trans[i]) - c.shift(r, 0)) * std::exp(-c.s(r, 0));
      log_det += c.s(r, 0);
    }
    check_finite(z, k);
  }
  return -0.5 * z.squaredNorm() - arch_.d * kHalfLog2Pi - log_det;
}

double FlowModel::log_abs_det_jacobian(const Eigen::VectorXd& z) const {
  if (z.size() != arch_.d) throw InvalidArgument("flow: dimension mismatch");
  Eigen::VectorXd y = z;
  double log_det = arch_.d * std::log(scale_);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::MatrixXd out = b.net.forward(p, gather(y, b.cond));
    const auto c = split_output(out, static_cast<Eigen::Index>(b.trans.size()));
    for (std::size_t i = 0; i < b.trans.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      y(b.trans[i]) = y(b.trans[i]) * std::exp(c.s(r, 0)) + c.shift(r, 0);
      log_det += c.s(r, 0);
    }
    check_finite(y, k);
  }
  return log_det;
}

Eigen::MatrixXd FlowModel::jacobian(const Eigen::VectorXd& z) const {
  if (z.size() != arch_.d) throw InvalidArgument("flow_jacobian: dimension mismatch");
  const Eigen::Index d = arch_.d;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd y = z;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::VectorXd ya = gather(y, b.cond);
    const Eigen::MatrixXd out = b.net.forward(p, ya);
    const auto nb = static_cast<Eigen::Index>(b.trans.size());
    const auto c = split_output(out, nb);
    const Eigen::MatrixXd jnet = b.net.input_jacobian(p, ya);  // 2|B| x |A|

    Eigen::MatrixXd block = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < nb; ++i) {
      const int row = b.trans[static_cast<std::size_t>(i)];
      const double scale = std::exp(c.s(i, 0));
      block(row, row) = scale;
      for (std::size_t j = 0; j < b.cond.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        block(row, b.cond[j]) =
            y(row) * scale * c.dsdr(i, 0) * jnet(i, col) + jnet(nb + i, col);
      }
    }
    for (Eigen::Index i = 0; i < nb; ++i) {
      const int row = b.trans[static_cast<std::size_t>(i)];
      y(row) = y(row) * std::exp(c.s(i, 0)) + c.shift(i, 0);
    }
    jac = block * jac;
    check_finite(jac, k);
  }
  return scale_ * jac;
}

Eigen::VectorXd FlowModel::log_prob_batch(const Eigen::MatrixXd& x_rows) const {
  if (x_rows.cols() != arch_.d) throw InvalidArgument("flow_log_prob: dimension mismatch");
  Eigen::MatrixXd z = ((x_rows.transpose().colwise() - shift_) / scale_);
  Eigen::VectorXd log_det = Eigen::VectorXd::Constant(z.cols(), arch_.d * std::log(scale_));
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::MatrixXd out = b.net.forward(p, gather_rows(z, b.cond));
    const auto c = split_output(out, static_cast<Eigen::Index>(b.trans.size()));
    for (std::size_t i = 0; i < b.trans.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      z.row(b.trans[i]) = ((z.row(b.trans[i]).array() - c.shift.row(r)) * (-c.s.row(r)).exp()).matrix();
    }
    log_det += c.s.colwise().sum().matrix().transpose();
    check_finite(z, k);
  }
  return (-0.5 * z.colwise().squaredNorm().transpose().array() - arch_.d * kHalfLog2Pi).matrix() -
         log_det;
}

Eigen::MatrixXd FlowModel::sample(int n, Rng& rng) const {
  Eigen::MatrixXd y(arch_.d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < arch_.d; ++i) y(i, j) = rng.normal();
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::MatrixXd out = b.net.forward(p, gather_rows(y, b.cond));
    const auto c = split_output(out, static_cast<Eigen::Index>(b.trans.size()));
    for (std::size_t i = 0; i < b.trans.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      y.row(b.trans[i]) = (y.row(b.trans[i]).array() * c.s.row(r).exp() + c.shift.row(r)).matrix();
    }
    check_finite(y, k);
  }
  return ((scale_ * y).colwise() + shift_).transpose();
}

double FlowModel::batch_nll(const Eigen::MatrixXd& x_cols, std::span<double> grad) const {
  const Eigen::Index n = x_cols.cols();
  if (x_cols.rows() != arch_.d) throw InvalidArgument("flow: dimension mismatch");
  struct Saved {
    Mlp::Cache cache;
    Coupling coupling;
    Eigen::MatrixXd z_trans;  // transformed rows after the inverse step
  };
  std::vector<Saved> saved(blocks_.size());

  // Inverse pass x -> z; blocks applied last-to-first.
  Eigen::MatrixXd z = (x_cols.colwise() - shift_) / scale_;
  double log_det_sum = n * arch_.d * std::log(scale_);
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    auto& sv = saved[k];
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::MatrixXd out = b.net.forward(p, gather_rows(z, b.cond), &sv.cache);
    sv.coupling = split_output(out, static_cast<Eigen::Index>(b.trans.size()));
    for (std::size_t i = 0; i < b.trans.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      z.row(b.trans[i]) =
          ((z.row(b.trans[i]).array() - sv.coupling.shift.row(r)) * (-sv.coupling.s.row(r)).exp())
              .matrix();
    }
    sv.z_trans = gather_rows(z, b.trans);
    log_det_sum += sv.coupling.s.sum();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const double nll = inv_n * (0.5 * z.squaredNorm() + log_det_sum) + arch_.d * kHalfLog2Pi;

  // Reverse-mode: dL/dz, then back through blocks first-to-last.
  Eigen::MatrixXd g = z * inv_n;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto& b = blocks_[k];
    if (b.trans.empty()) continue;
    const auto& sv = saved[k];
    const auto nb = static_cast<Eigen::Index>(b.trans.size());
    const Eigen::ArrayXXd gz_b = gather_rows(g, b.trans).array();
    const Eigen::ArrayXXd inv_scale = (-sv.coupling.s).exp();
    Eigen::MatrixXd g_out(2 * nb, n);
    // z_B = (y_B - t) e^{-s}: dz/ds = -z_B, dz/dt = -e^{-s}; plus +1/N from the log-det term.
    const Eigen::ArrayXXd g_s = -gz_b * sv.z_trans.array() + inv_n;
    g_out.topRows(nb) = (g_s * sv.coupling.dsdr).matrix();
    g_out.bottomRows(nb) = (-gz_b * inv_scale).matrix();
    const auto p = params().subspan(b.offset, b.net.num_params());
    const Eigen::MatrixXd g_cond =
        b.net.backward(p, sv.cache, g_out, grad.subspan(b.offset, b.net.num_params()));
    for (std::size_t i = 0; i < b.trans.size(); ++i)
      g.row(b.trans[i]) = (gz_b.row(static_cast<Eigen::Index>(i)) * inv_scale.row(static_cast<Eigen::Index>(i))).matrix();
    for (std::size_t j = 0; j < b.cond.size(); ++j) g.row(b.cond[j]) += g_cond.row(static_cast<Eigen::Index>(j));
  }
  return nll;
}

Eigen::VectorXd FlowModel::jacobian_spectrum(const Eigen::VectorXd& x) const {
  return singular_values_desc(jacobian(inverse(x)));
}

LidEstimate FlowModel::lid(const Eigen::VectorXd& x, double tau) const {
  if (!(tau > 0.0)) throw InvalidArgument("flow_lid: tau must be positive");
  LidEstimate est;
  est.singular_values = jacobian_spectrum(x);
  est.tau = tau;
  est.lid = lid_from_spectrum(est.singular_values, tau, LidKind::rank_count, arch_.d);
  return est;
}

TrainingReport flow_train(FlowModel& model, const DataMatrix& data, const OptimizerConfig& opt,
                          std::uint64_t seed, AdamState* state) {
  if (data.dim() != model.dim())
    throw InvalidArgument("flow_train: data dimension " + std::to_string(data.dim()) +
                          " does not match model dimension " + std::to_string(model.dim()));
  AdamState local;
  AdamState& st = state ? *state : local;
  if (st.step == 0 && data.size() >= 2) model.fit_normalization(data.points);
  const Eigen::MatrixXd& pts = data.points;
  return run_adam(model.param_vector(), data.size(), opt, seed, st,
                  [&](std::span<const Eigen::Index> batch, Rng&, std::span<double> grad) {
                    Eigen::MatrixXd x(model.dim(), static_cast<Eigen::Index>(batch.size()));
                    for (std::size_t j = 0; j < batch.size(); ++j)
                      x.col(static_cast<Eigen::Index>(j)) = pts.row(batch[j]).transpose();
                    return model.batch_nll(x, grad);
                  });
}

}  // namespace lidood
