#include "lidood/checkpoint.hpp"

#include "lidood/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace lidood {

namespace {

constexpr const char* kMagic = "# lidood-checkpoint v";

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, int line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ParseError("checkpoint: bad number '" + s + "'", line);
  return v;
}

long parse_long(const std::string& s, int line) {
  long v = 0;
  const auto* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ParseError("checkpoint: bad integer '" + s + "'", line);
  return v;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(static_cast<int>(parse_long(item, 0)));
  return out;
}

void expect(const Checkpoint& c, const std::string& key, const std::string& value) {
  if (c.at(key) != value)
    throw ConfigError("checkpoint header mismatch for '" + key + "': file has '" + c.at(key) +
                      "', expected '" + value + "'");
}

void put_adam(Checkpoint& c, const AdamState* adam) {
  if (adam && adam->step > 0) c.adam = *adam;
}

void take_adam(const Checkpoint& c, AdamState* adam) {
  if (!adam) return;
  if (c.adam)
    *adam = *c.adam;
  else
    *adam = AdamState{};
}

}  // namespace

const std::string& Checkpoint::at(const std::string& key) const {
  auto it = header.find(key);
  if (it == header.end()) throw ParseError("checkpoint: missing header field '" + key + "'", 0);
  return it->second;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kMagic << kCheckpointVersion << '\n';
  for (const auto& [k, v] : ckpt.header) out << k << '=' << v << '\n';
  out << "params " << ckpt.params.size() << '\n';
  for (double p : ckpt.params) out << fmt(p) << '\n';
  if (ckpt.adam) {
    out << "adam " << ckpt.adam->step << '\n';
    for (std::size_t i = 0; i < ckpt.adam->m.size(); ++i)
      out << fmt(ckpt.adam->m[i]) << ' ' << fmt(ckpt.adam->v[i]) << '\n';
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  Checkpoint c;
  std::string line;
  int ln = 1;
  if (!std::getline(in, line) || line.rfind(kMagic, 0) != 0)
    throw ParseError("checkpoint: missing format tag", ln);
  const long version = parse_long(line.substr(std::string(kMagic).size()), ln);
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version), ln);

  long n_params = -1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.rfind("params ", 0) == 0) {
      n_params = parse_long(line.substr(7), ln);
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("checkpoint: expected key=value", ln);
    c.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (n_params < 0) throw ParseError("checkpoint: missing parameter block", ln);
  c.params.reserve(static_cast<std::size_t>(n_params));
  for (long i = 0; i < n_params; ++i) {
    if (!std::getline(in, line)) throw ParseError("checkpoint: truncated parameter block", ln);
    c.params.push_back(parse_double(line, ++ln));
  }
  if (std::getline(in, line)) {
    ++ln;
    if (line.rfind("adam ", 0) != 0) throw ParseError("checkpoint: unexpected content", ln);
    AdamState st;
    st.step = parse_long(line.substr(5), ln);
    for (long i = 0; i < n_params; ++i) {
      if (!std::getline(in, line)) throw ParseError("checkpoint: truncated optimizer block", ln);
      ++ln;
      const auto sp = line.find(' ');
      if (sp == std::string::npos) throw ParseError("checkpoint: expected 'm v'", ln);
      st.m.push_back(parse_double(line.substr(0, sp), ln));
      st.v.push_back(parse_double(line.substr(sp + 1), ln));
    }
    c.adam = std::move(st);
  }
  return c;
}

std::string checkpoint_kind(const std::filesystem::path& path) { return read_checkpoint(path).at("kind"); }

void save_flow(const std::filesystem::path& path, const FlowModel& model, const AdamState* adam) {
  Checkpoint c;
  const auto& a = model.arch();
  c.header["kind"] = "flow";
  c.header["d"] = std::to_string(a.d);
  c.header["n_blocks"] = std::to_string(a.n_blocks);
  c.header["hidden_width"] = std::to_string(a.hidden_width);
  c.header["mask"] = "alternating_parity";
  std::string shift;
  for (Eigen::Index i = 0; i < model.data_shift().size(); ++i) shift += (i ? "," : "") + fmt(model.data_shift()(i));
  c.header["norm_shift"] = shift;
  c.header["norm_scale"] = fmt(model.data_scale());
  c.params.assign(model.params().begin(), model.params().end());
  put_adam(c, adam);
  write_checkpoint(path, c);
}

FlowModel load_flow(const std::filesystem::path& path, const std::optional<FlowArch>& expected, AdamState* adam) {
  const Checkpoint c = read_checkpoint(path);
  if (c.at("kind") != "flow") throw ConfigError("checkpoint is a '" + c.at("kind") + "' model, expected flow");
  expect(c, "mask", "alternating_parity");
  FlowArch arch;
  arch.d = static_cast<int>(parse_long(c.at("d"), 0));
  arch.n_blocks = static_cast<int>(parse_long(c.at("n_blocks"), 0));
  arch.hidden_width = static_cast<int>(parse_long(c.at("hidden_width"), 0));
  if (expected) {
    expect(c, "d", std::to_string(expected->d));
    expect(c, "n_blocks", std::to_string(expected->n_blocks));
    expect(c, "hidden_width", std::to_string(expected->hidden_width));
  }
  FlowModel model(arch);
  if (c.params.size() != model.num_params())
    throw ParseError("checkpoint: parameter count does not match the architecture", 0);
  std::copy(c.params.begin(), c.params.end(), model.params().begin());
  std::vector<double> shift;
  std::stringstream ss(c.at("norm_shift"));
  std::string item;
  while (std::getline(ss, item, ',')) shift.push_back(parse_double(item, 0));
  if (static_cast<int>(shift.size()) != arch.d) throw ParseError("checkpoint: norm_shift has wrong length", 0);
  model.set_normalization(Eigen::Map<Eigen::VectorXd>(shift.data(), arch.d), parse_double(c.at("norm_scale"), 0));
  take_adam(c, adam);
  return model;
}

void save_score_model(const std::filesystem::path& path, const ScoreModel& model, const AdamState* adam) {
  Checkpoint c;
  const auto& a = model.arch();
  const auto& s = model.sde();
  c.header["kind"] = "diffusion";
  c.header["d"] = std::to_string(a.d);
  c.header["hidden"] = join_ints(a.hidden);
  c.header["time_embed_dim"] = std::to_string(a.time_embed_dim);
  c.header["activation"] = "silu";
  c.header["beta0"] = fmt(s.beta0);
  c.header["beta1"] = fmt(s.beta1);
  c.header["T"] = fmt(s.T);
  c.header["t_min"] = fmt(s.t_min);
  c.params.assign(model.params().begin(), model.params().end());
  put_adam(c, adam);
  write_checkpoint(path, c);
}

ScoreModel load_score_model(const std::filesystem::path& path, const std::optional<ScoreArch>& expected,
                            AdamState* adam) {
  const Checkpoint c = read_checkpoint(path);
  if (c.at("kind") != "diffusion")
    throw ConfigError("checkpoint is a '" + c.at("kind") + "' model, expected diffusion");
  expect(c, "activation", "silu");
  ScoreArch arch;
  arch.d = static_cast<int>(parse_long(c.at("d"), 0));
  arch.hidden = split_ints(c.at("hidden"));
  arch.time_embed_dim = static_cast<int>(parse_long(c.at("time_embed_dim"), 0));
  if (expected) {
    expect(c, "d", std::to_string(expected->d));
    expect(c, "hidden", join_ints(expected->hidden));
    expect(c, "time_embed_dim", std::to_string(expected->time_embed_dim));
  }
  VpSde sde;
  sde.beta0 = parse_double(c.at("beta0"), 0);
  sde.beta1 = parse_double(c.at("beta1"), 0);
  sde.T = parse_double(c.at("T"), 0);
  sde.t_min = parse_double(c.at("t_min"), 0);
  ScoreModel model(arch, 0, sde);
  if (c.params.size() != model.num_params())
    throw ParseError("checkpoint: parameter count does not match the architecture", 0);
  std::copy(c.params.begin(), c.params.end(), model.params().begin());
  take_adam(c, adam);
  return model;
}

}  // namespace lidood
