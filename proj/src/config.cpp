#include "lidood/config.hpp"

#include "lidood/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace lidood {

namespace pt = boost::property_tree;

int DataConfig::dim() const {
  if (kind == "lollipop") return 2;
  if (kind == "mixture" || kind == "mixture_in" || kind == "mixture_out") return 3;
  if (kind == "embedded_gaussian") return embedded.ambient_dim;
  if (kind == "gaussian") return gaussian_dim;
  return -1;
}

std::vector<double> SlopeConfig::grid() const {
  if (r_points < 2 || !(r_min < r_max)) throw ConfigError("slope: need r_points >= 2 and r_min < r_max");
  std::vector<double> g;
  for (int i = 0; i < r_points; ++i) g.push_back(r_min + (r_max - r_min) * i / (r_points - 1));
  return g;
}

std::uint64_t ExperimentConfig::stage_seed(const std::string& stage) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : stage) h = (h ^ c) * 1099511628211ULL;
  std::uint64_t z = seed + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string to_string(ModelKind k) { return k == ModelKind::flow ? "flow" : "diffusion"; }

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"run", {"seed"}},
      {"data",
       {"kind", "n", "file", "candy", "stick", "point", "delta", "sigma", "eps", "intrinsic_dim",
        "ambient_dim", "embedding", "gaussian_dim"}},
      {"model", {"kind", "n_blocks", "hidden_width", "hidden", "time_embed_dim", "beta0", "beta1", "t_min"}},
      {"train",
       {"learning_rate", "batch_size", "steps", "clip_value", "cosine_decay", "resume"}},
      {"calibrate",
       {"subsample_size", "search_lo", "search_hi", "steps", "alpha_fo", "k_nn", "lpca_subsample"}},
      {"lid", {"tau", "t0", "k", "drift_correction"}},
      {"evaluate", {"cap", "eps", "ode_steps", "trace", "hutchinson_samples", "n_in"}},
      {"paradox", {"n_train", "n_generate", "n_query"}},
      {"slope", {"target", "variances", "point", "r_min", "r_max", "r_points", "n_samples"}},
  };
  return s;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string section) : section_(std::move(section)) {
    if (auto child = tree.get_child_optional(section_)) node_ = &*child;
  }
  bool present() const { return node_ != nullptr; }

  std::optional<std::string> raw(const std::string& key) const {
    if (!node_) return std::nullopt;
    auto v = node_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return *v;
  }
  std::string name(const std::string& key) const { return section_ + "." + key; }

  template <class T>
  void get(const std::string& key, T& out) const {
    if (auto v = raw(key)) out = parse<T>(key, *v);
  }
  template <class T>
  void get(const std::string& key, std::optional<T>& out) const {
    if (auto v = raw(key)) out = parse<T>(key, *v);
  }
  std::string require(const std::string& key) const {
    auto v = raw(key);
    if (!v || v->empty()) throw ConfigError("missing required field '" + name(key) + "'");
    return *v;
  }

  template <class T>
  T parse(const std::string& key, const std::string& s) const {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw ConfigError("field '" + name(key) + "' expects a boolean, got '" + s + "'");
    } else if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<double>>) {
      T out;
      std::stringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ','))
        out.push_back(parse<typename T::value_type>(key, trim(item)));
      return out;
    } else {
      T v{};
      const auto* end = s.data() + s.size();
      auto res = std::from_chars(s.data(), end, v);
      if (res.ec != std::errc() || res.ptr != end)
        throw ConfigError("field '" + name(key) + "' has malformed value '" + s + "'");
      return v;
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  std::string section_;
  const pt::ptree* node_ = nullptr;
};

void check_schema(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    auto it = schema().find(section);
    if (it == schema().end() && section != "ood_data")
      throw ConfigError("unknown config section [" + section + "]");
    const auto& keys = section == "ood_data" ? schema().at("data") : it->second;
    for (const auto& [key, value] : body)
      if (!keys.count(key)) throw ConfigError("unknown config field '" + section + "." + key + "'");
  }
}

DataConfig read_data(const Reader& r) {
  DataConfig d;
  d.kind = r.require("kind");
  static const std::set<std::string> kinds = {"lollipop", "mixture", "mixture_in", "mixture_out",
                                              "embedded_gaussian", "gaussian", "file"};
  if (!kinds.count(d.kind)) throw ConfigError("field '" + r.name("kind") + "' has unknown value '" + d.kind + "'");
  r.get("n", d.n);
  if (d.kind == "file") d.file = r.require("file");
  r.get("candy", d.lollipop.candy);
  r.get("stick", d.lollipop.stick);
  r.get("point", d.lollipop.point);
  r.get("delta", d.mixture.delta);
  r.get("sigma", d.mixture.sigma);
  r.get("eps", d.mixture.eps);
  r.get("intrinsic_dim", d.embedded.intrinsic_dim);
  r.get("ambient_dim", d.embedded.ambient_dim);
  std::string emb = "coordinate_replication";
  r.get("embedding", emb);
  if (emb == "coordinate_replication")
    d.embedded.embedding = Embedding::coordinate_replication;
  else if (emb == "random_rotation")
    d.embedded.embedding = Embedding::random_rotation;
  else
    throw ConfigError("field '" + r.name("embedding") + "' has unknown value '" + emb + "'");
  r.get("gaussian_dim", d.gaussian_dim);
  d.embedded.n_samples = d.n;
  if (d.n < 1) throw ConfigError("field '" + r.name("n") + "' must be >= 1");
  return d;
}

}  // namespace

ExperimentConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  check_schema(tree);

  ExperimentConfig c;
  Reader(tree, "run").get("seed", c.seed);
  c.data = read_data(Reader(tree, "data"));
  if (Reader ood(tree, "ood_data"); ood.present()) c.ood_data = read_data(ood);

  Reader m(tree, "model");
  std::string kind = "flow";
  m.get("kind", kind);
  if (kind == "flow")
    c.model.kind = ModelKind::flow;
  else if (kind == "diffusion")
    c.model.kind = ModelKind::diffusion;
  else
    throw ConfigError("field 'model.kind' has unknown value '" + kind + "'");
  const int d = c.data.dim();
  c.model.flow.d = d;
  c.model.score.d = d;
  m.get("n_blocks", c.model.flow.n_blocks);
  m.get("hidden_width", c.model.flow.hidden_width);
  m.get("hidden", c.model.score.hidden);
  m.get("time_embed_dim", c.model.score.time_embed_dim);
  m.get("beta0", c.model.sde.beta0);
  m.get("beta1", c.model.sde.beta1);
  m.get("t_min", c.model.sde.t_min);

  Reader t(tree, "train");
  t.get("learning_rate", c.train.learning_rate);
  t.get("batch_size", c.train.batch_size);
  t.get("steps", c.train.steps);
  t.get("clip_value", c.train.clip_value);
  t.get("cosine_decay", c.train.cosine_decay);
  t.get("resume", c.resume);
  if (c.train.batch_size < 1) throw ConfigError("field 'train.batch_size' must be >= 1");
  if (c.train.steps < 0) throw ConfigError("field 'train.steps' must be >= 0");
  if (!(c.train.learning_rate >= 0.0)) throw ConfigError("field 'train.learning_rate' must be >= 0");

  Reader cal(tree, "calibrate");
  cal.get("subsample_size", c.calibrate.bisect.subsample_size);
  cal.get("search_lo", c.calibrate.bisect.search_lo);
  cal.get("search_hi", c.calibrate.bisect.search_hi);
  cal.get("steps", c.calibrate.bisect.steps);
  cal.get("alpha_fo", c.calibrate.lpca.alpha_fo);
  cal.get("k_nn", c.calibrate.lpca.k_nn);
  cal.get("lpca_subsample", c.calibrate.lpca_subsample);

  Reader l(tree, "lid");
  l.get("tau", c.lid.tau);
  l.get("t0", c.lid.dm.t0);
  l.get("k", c.lid.dm.k);
  l.get("drift_correction", c.lid.dm.drift_correction);
  if (c.lid.tau && !(*c.lid.tau > 0.0)) throw ConfigError("field 'lid.tau' must be positive");

  Reader e(tree, "evaluate");
  e.get("cap", c.evaluate.roc.cap);
  e.get("eps", c.evaluate.roc.eps);
  e.get("ode_steps", c.evaluate.likelihood.ode_steps);
  std::string trace = d <= 16 ? "exact" : "hutchinson";
  e.get("trace", trace);
  if (trace == "exact")
    c.evaluate.likelihood.trace = TraceMode::exact;
  else if (trace == "hutchinson")
    c.evaluate.likelihood.trace = TraceMode::hutchinson;
  else
    throw ConfigError("field 'evaluate.trace' has unknown value '" + trace + "'");
  e.get("hutchinson_samples", c.evaluate.likelihood.hutchinson_samples);
  e.get("n_in", c.evaluate.n_in);

  Reader p(tree, "paradox");
  p.get("n_train", c.paradox.n_train);
  p.get("n_generate", c.paradox.n_generate);
  p.get("n_query", c.paradox.n_query);

  Reader s(tree, "slope");
  s.get("target", c.slope.target);
  s.get("variances", c.slope.variances);
  s.get("point", c.slope.point);
  if (c.slope.target != "gaussian" && c.slope.target != "convolution" && c.slope.target != "flow")
    throw ConfigError("field 'slope.target' has unknown value '" + c.slope.target + "'");
  s.get("r_min", c.slope.r_min);
  s.get("r_max", c.slope.r_max);
  s.get("r_points", c.slope.r_points);
  s.get("n_samples", c.slope.n_samples);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

template <class T>
std::string list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>)
      s += num(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

void write_data(std::ostream& o, const std::string& section, const DataConfig& d) {
  o << "[" << section << "]\n";
  o << "kind = " << d.kind << "\n";
  o << "n = " << d.n << "\n";
  if (d.kind == "file") o << "file = " << d.file << "\n";
  if (d.kind == "lollipop")
    o << "candy = " << num(d.lollipop.candy) << "\nstick = " << num(d.lollipop.stick)
      << "\npoint = " << num(d.lollipop.point) << "\n";
  if (d.kind.rfind("mixture", 0) == 0)
    o << "delta = " << num(d.mixture.delta) << "\nsigma = " << num(d.mixture.sigma)
      << "\neps = " << num(d.mixture.eps) << "\n";
  if (d.kind == "embedded_gaussian")
    o << "intrinsic_dim = " << d.embedded.intrinsic_dim << "\nambient_dim = " << d.embedded.ambient_dim
      << "\nembedding = "
      << (d.embedded.embedding == Embedding::coordinate_replication ? "coordinate_replication"
                                                                     : "random_rotation")
      << "\n";
  if (d.kind == "gaussian") o << "gaussian_dim = " << d.gaussian_dim << "\n";
  o << "\n";
}

}  // namespace

std::string resolved_config_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[run]\nseed = " << c.seed << "\n\n";
  write_data(o, "data", c.data);
  if (c.ood_data) write_data(o, "ood_data", *c.ood_data);
  o << "[model]\nkind = " << to_string(c.model.kind) << "\n";
  if (c.model.kind == ModelKind::flow)
    o << "n_blocks = " << c.model.flow.n_blocks << "\nhidden_width = " << c.model.flow.hidden_width << "\n";
  else
    o << "hidden = " << list(c.model.score.hidden) << "\ntime_embed_dim = " << c.model.score.time_embed_dim
      << "\nbeta0 = " << num(c.model.sde.beta0) << "\nbeta1 = " << num(c.model.sde.beta1)
      << "\nt_min = " << num(c.model.sde.t_min) << "\n";
  o << "\n[train]\nlearning_rate = " << num(c.train.learning_rate) << "\nbatch_size = " << c.train.batch_size
    << "\nsteps = " << c.train.steps << "\nclip_value = " << num(c.train.clip_value)
    << "\ncosine_decay = " << (c.train.cosine_decay ? "true" : "false")
    << "\nresume = " << (c.resume ? "true" : "false") << "\n\n";
  o << "[calibrate]\nsubsample_size = " << c.calibrate.bisect.subsample_size
    << "\nsearch_lo = " << num(c.calibrate.bisect.search_lo) << "\nsearch_hi = " << num(c.calibrate.bisect.search_hi)
    << "\nsteps = " << c.calibrate.bisect.steps << "\nalpha_fo = " << num(c.calibrate.lpca.alpha_fo) << "\n";
  if (c.calibrate.lpca.k_nn) o << "k_nn = " << *c.calibrate.lpca.k_nn << "\n";
  if (c.calibrate.lpca_subsample) o << "lpca_subsample = " << *c.calibrate.lpca_subsample << "\n";
  o << "\n[lid]\n";
  if (c.lid.tau) o << "tau = " << num(*c.lid.tau) << "\n";
  o << "t0 = " << num(c.lid.dm.t0) << "\nk = " << c.lid.dm.k
    << "\ndrift_correction = " << (c.lid.dm.drift_correction ? "true" : "false") << "\n\n";
  o << "[evaluate]\ncap = " << c.evaluate.roc.cap << "\neps = " << num(c.evaluate.roc.eps)
    << "\node_steps = " << c.evaluate.likelihood.ode_steps
    << "\ntrace = " << (c.evaluate.likelihood.trace == TraceMode::exact ? "exact" : "hutchinson")
    << "\nhutchinson_samples = " << c.evaluate.likelihood.hutchinson_samples << "\nn_in = " << c.evaluate.n_in
    << "\n\n";
  o << "[paradox]\nn_train = " << c.paradox.n_train << "\nn_generate = " << c.paradox.n_generate
    << "\nn_query = " << c.paradox.n_query << "\n\n";
  o << "[slope]\ntarget = " << c.slope.target << "\nvariances = " << list(c.slope.variances);
  if (!c.slope.point.empty()) o << "\npoint = " << list(c.slope.point);
  o
    << "\nr_min = " << num(c.slope.r_min) << "\nr_max = " << num(c.slope.r_max)
    << "\nr_points = " << c.slope.r_points << "\nn_samples = " << c.slope.n_samples << "\n";
  return o.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : resolved_config_text(cfg)) h = (h ^ ch) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lidood
