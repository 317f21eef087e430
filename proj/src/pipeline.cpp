#include "lidood/pipeline.hpp"

#include "lidood/checkpoint.hpp"
#include "lidood/errors.hpp"
#include "lidood/geometry.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lidood {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

DataMatrix gaussian_data(int d, int n, std::uint64_t seed) {
  Rng rng(seed);
  DataMatrix out;
  out.seed = seed;
  out.points.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) out.points(i, k) = rng.normal();
  return out;
}

/// Training data: the run's data.csv when present, otherwise generated and saved.
DataMatrix training_data(const ExperimentConfig& cfg, const RunLayout& run) {
  if (fs::exists(run.data())) return load_csv(run.data());
  DataMatrix d = make_dataset(cfg.data, cfg.stage_seed("data"));
  save_csv(d, run.data());
  return d;
}

double mean_of(const std::vector<ScoredPoint>& s, bool lid) {
  double t = 0.0;
  for (const auto& p : s) t += lid ? p.lid : p.log_prob;
  return s.empty() ? 0.0 : t / static_cast<double>(s.size());
}

}  // namespace

DataMatrix make_dataset(const DataConfig& cfg, std::uint64_t seed) {
  if (cfg.kind == "lollipop") return gen_lollipop(cfg.n, seed, cfg.lollipop);
  if (cfg.kind == "mixture") return gen_mixture(cfg.mixture, cfg.n, seed);
  if (cfg.kind == "mixture_in") return gen_mixture_component(cfg.mixture, false, cfg.n, seed);
  if (cfg.kind == "mixture_out") return gen_mixture_component(cfg.mixture, true, cfg.n, seed);
  if (cfg.kind == "embedded_gaussian") {
    EmbeddedGaussianSpec spec = cfg.embedded;
    spec.n_samples = cfg.n;
    return gen_embedded_gaussian(spec, seed);
  }
  if (cfg.kind == "gaussian") return gaussian_data(cfg.gaussian_dim, cfg.n, seed);
  if (cfg.kind == "file") return load_csv(cfg.file);
  throw ConfigError("unknown data kind '" + cfg.kind + "'");
}

ModelHandle::ModelHandle(FlowModel flow) : flow_(std::move(flow)) {}

ModelHandle::ModelHandle(ScoreModel dm, DmLidConfig lid_cfg, LikelihoodConfig likelihood, std::uint64_t lid_seed)
    : dm_(std::move(dm)), lid_cfg_(lid_cfg), likelihood_(likelihood), lid_seed_(lid_seed) {}

int ModelHandle::dim() const { return flow_ ? flow_->dim() : dm_->dim(); }

double ModelHandle::log_prob(const Eigen::VectorXd& x) const {
  return flow_ ? flow_->log_prob(x) : dm_log_prob(*dm_, x, likelihood_);
}

Eigen::VectorXd ModelHandle::spectrum(const Eigen::VectorXd& x) const {
  return flow_ ? flow_->jacobian_spectrum(x) : dm_score_spectrum(*dm_, x, lid_cfg_, lid_seed_);
}

double ModelHandle::lid(const Eigen::VectorXd& x, double tau) const {
  return lid_from_spectrum(spectrum(x), tau, lid_kind(), dim());
}

ModelHandle load_model(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw IoError("missing checkpoint " + checkpoint.string());
  const std::string kind = checkpoint_kind(checkpoint);
  if (kind != to_string(cfg.model.kind))
    throw ConfigError("checkpoint holds a " + kind + " model but model.kind is " + to_string(cfg.model.kind));
  if (cfg.model.kind == ModelKind::flow) {
    std::optional<FlowArch> expected;
    if (cfg.model.flow.d > 0) expected = cfg.model.flow;
    return ModelHandle(load_flow(checkpoint, expected));
  }
  std::optional<ScoreArch> expected;
  if (cfg.model.score.d > 0) expected = cfg.model.score;
  ScoreModel m = load_score_model(checkpoint, expected);
  if (!(m.sde() == cfg.model.sde)) throw ConfigError("checkpoint SDE constants differ from the config");
  cfg.lid.dm.validate(m.dim(), m.sde());
  return ModelHandle(std::move(m), cfg.lid.dm, cfg.evaluate.likelihood, cfg.stage_seed("lid"));
}

LpcaSummary lpca_target(const DataMatrix& data, const CalibrateStageConfig& cfg, std::uint64_t seed) {
  return lpca_lid_mean(data, cfg.lpca, cfg.lpca_subsample, seed);
}

TauCalibration calibrate_model(const ModelHandle& model, const DataMatrix& data, double target,
                               const CalibrationConfig& cfg, std::uint64_t seed) {
  return calibrate_tau_cached([&](const Eigen::VectorXd& x) { return model.spectrum(x); }, model.lid_kind(), data,
                              target, cfg, seed);
}

std::vector<ScoredPoint> score_dataset(const ModelHandle& model, const DataMatrix& data, double tau, bool is_ood) {
  if (data.dim() != model.dim())
    throw InvalidArgument("query dimension " + std::to_string(data.dim()) + " does not match model dimension " +
                          std::to_string(model.dim()));
  std::vector<ScoredPoint> out;
  out.reserve(static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd x = data.points.row(i).transpose();
    out.push_back({model.log_prob(x), model.lid(x, tau), is_ood});
  }
  return out;
}

void write_scores_csv(const fs::path& path, const std::vector<ScoredPoint>& scores, const std::string& prov) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# " << prov << "\nlog_prob,lid,truth\n";
  for (const auto& s : scores) out << num(s.log_prob) << ',' << num(s.lid) << ',' << (s.is_ood ? 1 : 0) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void write_roc_csv(const fs::path& path, const RocReport& roc, const std::string& prov) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# " << prov << ",family=" << to_string(roc.family) << ",auc=" << num(roc.auc) << "\nfpr,tpr\n";
  std::vector<RocPoint> pts{{0.0, 0.0}};
  pts.insert(pts.end(), roc.points.begin(), roc.points.end());
  pts.push_back({1.0, 1.0});
  for (const auto& p : pts) out << num(p.fpr) << ',' << num(p.tpr) << '\n';
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

json provenance(const ExperimentConfig& cfg) {
  json seeds = {{"run", cfg.seed}};
  for (const char* stage : {"data", "ood_data", "init", "train", "calibrate", "lid", "evaluate", "paradox", "slope"})
    seeds[stage] = cfg.stage_seed(stage);
  return {{"config_hash", config_hash(cfg)}, {"seeds", seeds}};
}

std::string provenance_line(const ExperimentConfig& cfg) {
  return "config_hash=" + config_hash(cfg) + ",seed=" + std::to_string(cfg.seed);
}

void prepare_run_dir(const ExperimentConfig& cfg, const RunLayout& run) {
  std::error_code ec;
  fs::create_directories(run.dir, ec);
  if (ec) throw IoError("cannot create run directory " + run.dir.string() + ": " + ec.message());
  std::ofstream out(run.config());
  if (!out) throw IoError("cannot write " + run.config().string());
  out << "# config_hash=" << config_hash(cfg) << '\n' << resolved_config_text(cfg);
}

json cmd_gen_data(const ExperimentConfig& cfg, const RunLayout& run) {
  const DataMatrix d = make_dataset(cfg.data, cfg.stage_seed("data"));
  save_csv(d, run.data());
  json out = provenance(cfg);
  out["data"] = {{"path", run.data().string()}, {"n", d.size()}, {"d", d.dim()}};
  if (cfg.ood_data) {
    const DataMatrix o = make_dataset(*cfg.ood_data, cfg.stage_seed("ood_data"));
    save_csv(o, run.ood_data());
    out["ood_data"] = {{"path", run.ood_data().string()}, {"n", o.size()}, {"d", o.dim()}};
  }
  return out;
}

json cmd_train(const ExperimentConfig& cfg, const RunLayout& run) {
  const DataMatrix data = training_data(cfg, run);
  const bool resume = cfg.resume && fs::exists(run.checkpoint());
  AdamState adam;
  TrainingReport rep;
  // Each resumed segment draws fresh batches.
  auto seed_for = [&](long step) { return cfg.stage_seed("train") + static_cast<std::uint64_t>(step); };
  long start_step = 0;
  if (cfg.model.kind == ModelKind::flow) {
    FlowArch arch = cfg.model.flow;
    arch.d = static_cast<int>(data.dim());
    FlowModel model = resume ? load_flow(run.checkpoint(), arch, &adam) : FlowModel(arch, cfg.stage_seed("init"));
    start_step = adam.step;
    rep = flow_train(model, data, cfg.train, seed_for(start_step), &adam);
    save_flow(run.checkpoint(), model, &adam);
  } else {
    ScoreArch arch = cfg.model.score;
    arch.d = static_cast<int>(data.dim());
    ScoreModel model = resume ? load_score_model(run.checkpoint(), arch, &adam)
                              : ScoreModel(arch, cfg.stage_seed("init"), cfg.model.sde);
    start_step = adam.step;
    rep = dm_train(model, data, cfg.train, seed_for(start_step), &adam);
    save_score_model(run.checkpoint(), model, &adam);
  }

  {
    const bool append = resume && fs::exists(run.loss_trace());
    std::ofstream out(run.loss_trace(), append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot write " + run.loss_trace().string());
    if (!append) out << "# " << provenance_line(cfg) << "\nstep,loss\n";
    for (std::size_t i = 0; i < rep.loss_trace.size(); ++i)
      out << start_step + static_cast<long>(i) + 1 << ',' << num(rep.loss_trace[i]) << '\n';
  }

  json out = provenance(cfg);
  out["model_kind"] = to_string(cfg.model.kind);
  out["train_seed"] = rep.seed;
  out["wall_seconds"] = rep.wall_seconds;
  out["steps_run"] = rep.steps_run;
  out["total_steps"] = adam.step;
  out["resumed"] = resume;
  out["aborted"] = rep.aborted;
  out["message"] = rep.message;
  out["final_loss"] = rep.loss_trace.empty() ? json(nullptr) : json(rep.loss_trace.back());
  write_json(run.train_report(), out);
  if (rep.aborted) throw NumericError("training aborted: " + rep.message + " (last finite parameters saved)");
  return out;
}

json cmd_calibrate(const ExperimentConfig& cfg, const RunLayout& run) {
  const DataMatrix data = training_data(cfg, run);
  const ModelHandle model = load_model(cfg, run.checkpoint());
  const LpcaSummary target = lpca_target(data, cfg.calibrate, cfg.stage_seed("calibrate"));
  const TauCalibration cal =
      calibrate_model(model, data, target.mean_lid, cfg.calibrate.bisect, cfg.stage_seed("calibrate"));
  json out = provenance(cfg);
  out["calibration"] = to_json(cal);
  out["lpca"] = {{"mean_lid", target.mean_lid},
                 {"n_evaluated", target.n_evaluated},
                 {"n_degenerate", target.n_degenerate},
                 {"alpha_fo", cfg.calibrate.lpca.alpha_fo},
                 {"k_nn", cfg.calibrate.lpca.resolved_k(data.size())}};
  write_json(run.calibration(), out);
  return out;
}

namespace {

double resolve_tau(const ExperimentConfig& cfg, const RunLayout& run, std::optional<TauCalibration>& cal) {
  if (fs::exists(run.calibration())) cal = calibration_from_json(read_json(run.calibration()).at("calibration"));
  if (cfg.lid.tau) return *cfg.lid.tau;
  if (!cal) throw IoError("missing " + run.calibration().string() + " (run calibrate first or set lid.tau)");
  return cal->tau;
}

}  // namespace

json cmd_evaluate(const ExperimentConfig& cfg, const RunLayout& run) {
  if (!cfg.ood_data && !fs::exists(run.ood_data()))
    throw ConfigError("missing required field 'ood_data.kind'");
  const ModelHandle model = load_model(cfg, run.checkpoint());
  std::optional<TauCalibration> cal;
  const double tau = resolve_tau(cfg, run, cal);

  DataMatrix in_q;
  if (cfg.data.kind == "file") {
    in_q = load_csv(cfg.data.file);
  } else {
    DataConfig dc = cfg.data;
    dc.n = cfg.evaluate.n_in;
    in_q = make_dataset(dc, cfg.stage_seed("evaluate"));
  }
  const DataMatrix ood_q = fs::exists(run.ood_data()) ? load_csv(run.ood_data())
                                                      : make_dataset(*cfg.ood_data, cfg.stage_seed("ood_data"));
  const auto s_in = score_dataset(model, in_q, tau, false);
  const auto s_ood = score_dataset(model, ood_q, tau, true);
  std::vector<ScoredPoint> all = s_in;
  all.insert(all.end(), s_ood.begin(), s_ood.end());
  write_scores_csv(run.scores(), all, provenance_line(cfg));

  DualRocConfig roc = cfg.evaluate.roc;
  roc.seed = cfg.stage_seed("evaluate");
  const EvalReport rep = evaluate_task(s_in, s_ood, cal, roc);
  for (const RocReport* r : {&rep.likelihood, &rep.lid, &rep.dual})
    write_roc_csv(run.roc(to_string(r->family)), *r, provenance_line(cfg));
  json out = to_json(rep);
  out["provenance"] = provenance(cfg);
  out["tau"] = tau;
  out["family_containment"] = rep.dual.auc >= rep.likelihood.auc;
  write_json(run.report(), out);
  return out;
}

json cmd_paradox_demo(const ExperimentConfig& cfg, const RunLayout& run) {
  const MixtureSpec& spec = cfg.data.mixture;
  spec.validate();
  json out = provenance(cfg);

  const double ratio = mixture_density_ratio(spec);
  const auto [vol_in, vol_out] = mixture_volume_ratio(spec);
  const double crossover = exact_crossover_eps(spec);
  const bool pathological = spec.eps < crossover;
  out["closed_form"] = {{"density_ratio_out_over_in", ratio},
                        {"volume_in", vol_in},
                        {"volume_out", vol_out},
                        {"volume_ratio_in_over_out", vol_in / vol_out},
                        {"crossover_eps_exact", crossover},
                        {"crossover_eps_closed_form", closed_form_crossover_eps(spec.delta, spec.sigma)},
                        {"regime", pathological ? "pathological" : "non-pathological regime"}};

  const DataMatrix train = gen_mixture(spec, cfg.paradox.n_train, cfg.stage_seed("data"));
  save_csv(train, run.data());
  FlowArch arch = cfg.model.flow;
  arch.d = 3;
  FlowModel flow(arch, cfg.stage_seed("init"));
  AdamState adam;
  const TrainingReport rep = flow_train(flow, train, cfg.train, cfg.stage_seed("train"), &adam);
  save_flow(run.checkpoint(), flow, &adam);
  if (rep.aborted) throw NumericError("training aborted: " + rep.message);

  Rng gen_rng(cfg.stage_seed("paradox"));
  const Eigen::MatrixXd gen = flow.sample(cfg.paradox.n_generate, gen_rng);
  const Eigen::Vector3d half_box{3.0 * spec.eps, 3.0 * spec.sigma, 3.0 * spec.eps};
  long in_box = 0;
  for (Eigen::Index i = 0; i < gen.rows(); ++i)
    if (((gen.row(i).transpose() - spec.mu_out).array().abs() <= half_box.array()).all()) ++in_box;
  const double gen_frac = static_cast<double>(in_box) / static_cast<double>(gen.rows());

  const ModelHandle model(flow);
  const LpcaSummary target = lpca_target(train, cfg.calibrate, cfg.stage_seed("calibrate"));
  const TauCalibration cal =
      calibrate_model(model, train, target.mean_lid, cfg.calibrate.bisect, cfg.stage_seed("calibrate"));
  const double tau = cfg.lid.tau.value_or(cal.tau);

  const DataMatrix q_in = gen_mixture_component(spec, false, cfg.paradox.n_query, cfg.stage_seed("evaluate"));
  const DataMatrix q_out = gen_mixture_component(spec, true, cfg.paradox.n_query, cfg.stage_seed("ood_data"));
  const auto s_in = score_dataset(model, q_in, tau, false);
  const auto s_ood = score_dataset(model, q_out, tau, true);
  std::vector<ScoredPoint> all = s_in;
  all.insert(all.end(), s_ood.begin(), s_ood.end());
  write_scores_csv(run.scores(), all, provenance_line(cfg));
  DualRocConfig roc = cfg.evaluate.roc;
  roc.seed = cfg.stage_seed("evaluate");
  const EvalReport ev = evaluate_task(s_in, s_ood, cal, roc);

  out["training"] = {{"steps_run", rep.steps_run},
                     {"wall_seconds", rep.wall_seconds},
                     {"final_loss", rep.loss_trace.empty() ? json(nullptr) : json(rep.loss_trace.back())}};
  out["generation"] = {{"n", gen.rows()}, {"in_out_box", in_box}, {"fraction", gen_frac}, {"limit", 2.0 * spec.delta}};
  out["calibration"] = to_json(cal);
  out["lpca_target"] = target.mean_lid;
  out["tau"] = tau;
  out["scores"] = {{"mean_log_prob_in", mean_of(s_in, false)},
                   {"mean_log_prob_ood", mean_of(s_ood, false)},
                   {"mean_lid_in", mean_of(s_in, true)},
                   {"mean_lid_ood", mean_of(s_ood, true)}};
  out["auc"] = {{"likelihood", ev.likelihood.auc},
                {"lid", ev.lid.auc},
                {"dual", ev.dual.auc},
                {"boost", ev.dual.auc - ev.likelihood.auc}};
  out["checks"] = {{"density_ratio_gt_1", ratio > 1.0},
                   {"generation_below_2delta", gen_frac < 2.0 * spec.delta},
                   {"ood_higher_mean_density", mean_of(s_ood, false) > mean_of(s_in, false)},
                   {"ood_lower_mean_lid", mean_of(s_ood, true) < mean_of(s_in, true)},
                   {"dual_ge_likelihood", ev.dual.auc >= ev.likelihood.auc}};
  write_json(run.paradox_report(), out);
  return out;
}

json cmd_mass_slope(const ExperimentConfig& cfg, const RunLayout& run) {
  const SlopeConfig& sc = cfg.slope;
  const std::vector<double> grid = sc.grid();
  SlopeEstimate est;
  int d = 0;
  if (sc.target == "flow") {
    const ModelHandle model = load_model(cfg, run.checkpoint());
    d = model.dim();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    if (!sc.point.empty()) {
      if (static_cast<int>(sc.point.size()) != d) throw ConfigError("field 'slope.point' has the wrong length");
      x = Eigen::Map<const Eigen::VectorXd>(sc.point.data(), d);
    } else if (fs::exists(run.data())) {
      x = load_csv(run.data()).points.row(0).transpose();
    }
    est = mass_lid_slope([&](const Eigen::VectorXd& y) { return model.log_prob(y); }, x, grid, sc.n_samples,
                         cfg.stage_seed("slope"));
  } else {
    d = static_cast<int>(sc.variances.size());
    if (d < 1) throw ConfigError("field 'slope.variances' must not be empty");
    const Eigen::VectorXd var = Eigen::Map<const Eigen::VectorXd>(sc.variances.data(), d);
    const Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd x = mean;
    if (!sc.point.empty()) {
      if (static_cast<int>(sc.point.size()) != d) throw ConfigError("field 'slope.point' has the wrong length");
      x = Eigen::Map<const Eigen::VectorXd>(sc.point.data(), d);
    }
    if (sc.target == "gaussian") {
      if ((var.array() <= 0.0).any()) throw ConfigError("field 'slope.variances' must be positive for target gaussian");
      est = mass_lid_slope([&](const Eigen::VectorXd& y) { return diag_gaussian_log_density(y, mean, var); }, x,
                           grid, sc.n_samples, cfg.stage_seed("slope"));
    } else {
      if ((var.array() < 0.0).any()) throw ConfigError("field 'slope.variances' must be non-negative");
      est = convolution_slope(mean, Eigen::MatrixXd(var.asDiagonal()), x, grid);
      for (double r : grid) {
        BallMassEstimate b;
        b.r = r;
        b.log_mass = gaussian_convolution_log_density(mean, Eigen::MatrixXd(var.asDiagonal()), x, r);
        b.mass = std::exp(b.log_mass);
        est.masses.push_back(b);
      }
    }
  }

  std::ofstream csv(run.slope());
  if (!csv) throw IoError("cannot write " + run.slope().string());
  csv << "# " << provenance_line(cfg) << ",target=" << sc.target << "\nr,mass,std_err,log_mass,slope\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    csv << num(grid[i]) << ',' << num(est.masses[i].mass) << ',' << num(est.masses[i].std_err) << ','
        << num(est.masses[i].log_mass) << ',' << num(est.pointwise[i]) << '\n';

  json out = provenance(cfg);
  out["target"] = sc.target;
  out["d"] = d;
  out["slope"] = est.slope;
  out["implied_lid"] = est.implied_lid;
  out["unreliable"] = est.unreliable;
  out["csv"] = run.slope().string();
  return out;
}

}  // namespace lidood
