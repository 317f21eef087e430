#include "lidood/synthdata.hpp"

#include "lidood/errors.hpp"
#include "lidood/rng.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

namespace lidood {

void DataMatrix::validate() const {
  if (!points.allFinite()) throw InvalidArgument("data matrix contains non-finite entries");
  if (labels && static_cast<Eigen::Index>(labels->size()) != points.rows())
    throw InvalidArgument("label count does not match number of points");
}

void MixtureSpec::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("mixture: delta must lie in (0, 1)");
  if (!(sigma > 0.0)) throw InvalidArgument("mixture: sigma must be positive");
  if (!(eps > 0.0 && eps < sigma)) throw InvalidArgument("mixture: need 0 < eps < sigma");
  if (!((mu_in - mu_out).norm() > 10.0 * sigma))
    throw InvalidArgument("mixture: components must be more than 10 sigma apart");
}

void EmbeddedGaussianSpec::validate() const {
  if (intrinsic_dim < 1) throw InvalidArgument("embedded gaussian: intrinsic_dim must be >= 1");
  if (ambient_dim < intrinsic_dim)
    throw InvalidArgument("embedded gaussian: ambient_dim must be >= intrinsic_dim");
  if (n_samples < 1) throw InvalidArgument("embedded gaussian: n_samples must be >= 1");
}

namespace lollipop {

double stick_end() { return kCandyCenter - kCandyRadius / std::sqrt(2.0); }

int classify(const Eigen::Vector2d& x, double tol) {
  if ((x - kIsolatedPoint).norm() <= tol) return kLabelPoint;
  const Eigen::Vector2d center(kCandyCenter, kCandyCenter);
  if ((x - center).norm() <= kCandyRadius + tol) return kLabelCandy;
  const double end = stick_end();
  if (std::abs(x.x() - x.y()) <= tol && x.x() >= -tol && x.x() <= end + tol) return kLabelStick;
  return -1;
}

}  // namespace lollipop

namespace {

// Fisher-Yates over row indices; applied to points and labels together.
void shuffle_rows(DataMatrix& data, Rng& rng) {
  const Eigen::Index n = data.size();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  Eigen::MatrixXd shuffled(n, data.dim());
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = perm[static_cast<std::size_t>(i)];
    shuffled.row(i) = data.points.row(src);
    if (data.labels) labels[static_cast<std::size_t>(i)] = (*data.labels)[static_cast<std::size_t>(src)];
  }
  data.points = std::move(shuffled);
  if (data.labels) data.labels = std::move(labels);
}

}  // namespace

DataMatrix gen_lollipop(int n, std::uint64_t seed, LollipopProportions props) {
  if (n < 3) throw InvalidArgument("gen_lollipop: need n >= 3");
  if (props.candy <= 0 || props.stick <= 0 || props.point <= 0)
    throw InvalidArgument("gen_lollipop: proportions must be positive");
  const double total = props.candy + props.stick + props.point;
  int n_point = std::max(1, static_cast<int>(std::lround(n * props.point / total)));
  int n_stick = std::max(1, static_cast<int>(std::lround(n * props.stick / total)));
  if (n - n_point - n_stick < 1) {
    n_point = 1;
    n_stick = std::max(1, std::min(n_stick, n - 2));
  }
  const int n_candy = n - n_point - n_stick;

  Rng rng(seed);
  DataMatrix out;
  out.seed = seed;
  out.points.resize(n, 2);
  std::vector<int> labels(static_cast<std::size_t>(n));
  int row = 0;
  for (int i = 0; i < n_candy; ++i, ++row) {
    const double radius = lollipop::kCandyRadius * std::sqrt(rng.uniform());
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    out.points(row, 0) = lollipop::kCandyCenter + radius * std::cos(angle);
    out.points(row, 1) = lollipop::kCandyCenter + radius * std::sin(angle);
    labels[static_cast<std::size_t>(row)] = lollipop::kLabelCandy;
  }
  const double end = lollipop::stick_end();
  for (int i = 0; i < n_stick; ++i, ++row) {
    const double s = end * rng.uniform();
    out.points(row, 0) = s;
    out.points(row, 1) = s;
    labels[static_cast<std::size_t>(row)] = lollipop::kLabelStick;
  }
  for (int i = 0; i < n_point; ++i, ++row) {
    out.points.row(row) = lollipop::kIsolatedPoint.transpose();
    labels[static_cast<std::size_t>(row)] = lollipop::kLabelPoint;
  }
  out.labels = std::move(labels);
  shuffle_rows(out, rng);
  return out;
}

DataMatrix gen_embedded_gaussian(const EmbeddedGaussianSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const int m = spec.intrinsic_dim;
  const int d = spec.ambient_dim;

  // Embedding map (d x m): replication stacks identity blocks round-robin,
  // rotation uses the Q factor of a Gaussian matrix (orthonormal columns).
  Eigen::MatrixXd embed = Eigen::MatrixXd::Zero(d, m);
  if (spec.embedding == Embedding::coordinate_replication) {
    for (int j = 0; j < d; ++j) embed(j, j % m) = 1.0;
  } else {
    Eigen::MatrixXd g(d, m);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < d; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    embed = qr.householderQ() * Eigen::MatrixXd::Identity(d, m);
  }

  DataMatrix out;
  out.seed = seed;
  Eigen::MatrixXd latent(spec.n_samples, m);
  for (int i = 0; i < spec.n_samples; ++i)
    for (int j = 0; j < m; ++j) latent(i, j) = rng.normal();
  out.points = latent * embed.transpose();
  return out;
}

namespace {

Eigen::RowVector3d sample_component(const Eigen::Vector3d& mean, const Eigen::Vector3d& var,
                                    Rng& rng) {
  Eigen::RowVector3d row;
  for (int k = 0; k < 3; ++k) row(k) = mean(k) + std::sqrt(var(k)) * rng.normal();
  return row;
}

}  // namespace

DataMatrix gen_mixture(const MixtureSpec& spec, int n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw InvalidArgument("gen_mixture: need n >= 1");
  Rng rng(seed);
  DataMatrix out;
  out.seed = seed;
  out.points.resize(n, 3);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const bool is_out = rng.uniform() < spec.delta;
    labels[static_cast<std::size_t>(i)] = is_out ? 1 : 0;
    out.points.row(i) = is_out ? sample_component(spec.mu_out, spec.var_out(), rng)
                               : sample_component(spec.mu_in, spec.var_in(), rng);
  }
  out.labels = std::move(labels);
  return out;
}

DataMatrix gen_mixture_component(const MixtureSpec& spec, bool out_component, int n,
                                 std::uint64_t seed) {
  spec.validate();
  if (n < 0) throw InvalidArgument("gen_mixture_component: need n >= 0");
  Rng rng(seed);
  DataMatrix out;
  out.seed = seed;
  out.points.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    out.points.row(i) = out_component ? sample_component(spec.mu_out, spec.var_out(), rng)
                                      : sample_component(spec.mu_in, spec.var_in(), rng);
  }
  out.labels = std::vector<int>(static_cast<std::size_t>(n), out_component ? 1 : 0);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void save_csv(const DataMatrix& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "# d=" << data.dim() << ",labels=" << (data.has_labels() ? 1 : 0) << ",n=" << data.size()
     << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      if (j) os << ',';
      auto res = std::to_chars(buf, buf + sizeof(buf), data.points(i, j),
                               std::chars_format::general, 17);
      os.write(buf, res.ptr - buf);
    }
    if (data.labels) os << ',' << (*data.labels)[static_cast<std::size_t>(i)];
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

namespace {

template <typename T>
T parse_number(std::string_view cell, std::size_t line) {
  T value{};
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last)
    throw ParseError("malformed numeric cell '" + std::string(cell) + "'", line);
  return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

DataMatrix load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("# ", 0) != 0) throw ParseError("missing '# d=...' header", 1);

  long d = -1, n = -1;
  int has_labels = -1;
  for (auto field : split(std::string_view(line).substr(2), ',')) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) throw ParseError("malformed header field", 1);
    const auto key = field.substr(0, eq);
    const auto val = field.substr(eq + 1);
    if (key == "d")
      d = parse_number<long>(val, 1);
    else if (key == "labels")
      has_labels = parse_number<int>(val, 1);
    else if (key == "n")
      n = parse_number<long>(val, 1);
    else
      throw ParseError("unknown header key '" + std::string(key) + "'", 1);
  }
  if (d < 1 || n < 0 || (has_labels != 0 && has_labels != 1))
    throw ParseError("header must define d>=1, labels in {0,1}, n>=0", 1);

  DataMatrix out;
  out.points.resize(n, d);
  std::vector<int> labels;
  if (has_labels) labels.reserve(static_cast<std::size_t>(n));
  const std::size_t expected_cells = static_cast<std::size_t>(d + has_labels);
  long row = 0;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (row >= n) throw ParseError("more rows than declared n", line_no);
    const auto cells = split(line, ',');
    if (cells.size() != expected_cells)
      throw ParseError("expected " + std::to_string(expected_cells) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    for (long j = 0; j < d; ++j) {
      const double v = parse_number<double>(cells[static_cast<std::size_t>(j)], line_no);
      if (!std::isfinite(v)) throw ParseError("non-finite value", line_no);
      out.points(row, j) = v;
    }
    if (has_labels) labels.push_back(parse_number<int>(cells.back(), line_no));
    ++row;
  }
  if (row != n) throw ParseError("expected " + std::to_string(n) + " rows, found " + std::to_string(row), line_no);
  if (has_labels) out.labels = std::move(labels);
  return out;
}

}  // namespace lidood
