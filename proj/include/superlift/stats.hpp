#pragma once

// Time-average recorders and estimators, plus the closed-form reference
// curves they are compared with.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "superlift/errors.hpp"

namespace superlift {

/// (1 + m1 beta lag)^(-alpha).
inline double acf_exact(double alpha, double beta, double m1, double lag) {
  if (!(lag >= 0.0)) throw DomainError("acf_exact: lag must be >= 0");
  return std::pow(1.0 + m1 * beta * lag, -alpha);
}

struct HittingMoments {
  double mean;
  double variance;
};

/// Moments of the exit time of dZ = sqrt(Z) dW from (0, 1) started at z0.
inline HittingMoments hitting_moments_exact(double z0) {
  if (!(z0 > 0.0 && z0 <= 1.0)) throw DomainError("hitting_moments_exact: z0 must lie in (0,1]");
  const double l = std::log(z0);
  return {-2.0 * z0 * l, 4.0 * z0 * z0 * l - 4.0 * z0 * z0 * l * l + 6.0 * z0 * (1.0 - z0)};
}

/// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  void add(const CompensatedSum& o) {
    add(o.sum_);
    add(o.comp_);
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Running count, mean and centered second moments of one or two channels
/// (Welford updates, Chan merge).
struct Moments {
  std::uint64_t n = 0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  double m2_x = 0.0;
  double m2_y = 0.0;
  double c_xy = 0.0;

  void add(double x, double y = 0.0) {
    ++n;
    const double dx = x - mean_x;
    const double dy = y - mean_y;
    const double inv = 1.0 / static_cast<double>(n);
    mean_x += dx * inv;
    mean_y += dy * inv;
    m2_x += dx * (x - mean_x);
    m2_y += dy * (y - mean_y);
    c_xy += dx * (y - mean_y);
  }

  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(o.n);
    const double nt = na + nb;
    const double dx = o.mean_x - mean_x;
    const double dy = o.mean_y - mean_y;
    mean_x += dx * nb / nt;
    mean_y += dy * nb / nt;
    m2_x += o.m2_x + dx * dx * na * nb / nt;
    m2_y += o.m2_y + dy * dy * na * nb / nt;
    c_xy += o.c_xy + dx * dy * na * nb / nt;
    n += o.n;
  }

  [[nodiscard]] double var_x() const { return n > 0 ? m2_x / static_cast<double>(n) : 0.0; }
  [[nodiscard]] double var_y() const { return n > 0 ? m2_y / static_cast<double>(n) : 0.0; }
  [[nodiscard]] double cov() const { return n > 0 ? c_xy / static_cast<double>(n) : 0.0; }
};

/// Histogram over declared, increasing edges.
class Histogram {
 public:
  Histogram() = default;
  explicit Histogram(std::vector<double> edges) : edges_(std::move(edges)) {
    if (edges_.size() < 2) throw ConfigError("histogram: need at least two edges");
    for (std::size_t i = 1; i < edges_.size(); ++i) {
      if (!(edges_[i] > edges_[i - 1])) throw ConfigError("histogram: edges must increase");
    }
    counts_.assign(edges_.size() - 1, 0);
  }

  /// Evenly spaced edges on [lo, hi].
  static Histogram uniform(double lo, double hi, std::size_t bins) {
    std::vector<double> e(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) {
      e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    }
    return Histogram(std::move(e));
  }

  /// Logarithmically spaced edges on [lo, hi], lo > 0, for tail densities.
  static Histogram logarithmic(double lo, double hi, std::size_t bins) {
    if (!(lo > 0.0)) throw ConfigError("histogram: log edges need lo > 0");
    std::vector<double> e(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) {
      e[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(bins));
    }
    return Histogram(std::move(e));
  }

  [[nodiscard]] bool empty_edges() const { return edges_.empty(); }

  void add(double v) {
    if (edges_.empty()) return;
    if (v < edges_.front()) {
      ++under_;
      return;
    }
    if (v >= edges_.back()) {
      ++over_;
      return;
    }
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), v);
    ++counts_[static_cast<std::size_t>(it - edges_.begin()) - 1];
  }

  void merge(const Histogram& o) {
    if (o.edges_.empty()) return;
    if (edges_.empty()) {
      *this = o;
      return;
    }
    if (o.edges_ != edges_) throw ConfigError("histogram: cannot merge different edges");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    under_ += o.under_;
    over_ += o.over_;
  }

  [[nodiscard]] std::uint64_t in_range() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }
  [[nodiscard]] std::uint64_t total() const { return in_range() + under_ + over_; }
  [[nodiscard]] std::uint64_t underflow() const { return under_; }
  [[nodiscard]] std::uint64_t overflow() const { return over_; }
  [[nodiscard]] const std::vector<double>& edges() const { return edges_; }
  [[nodiscard]] const std::vector<std::uint64_t>& counts() const { return counts_; }

  /// Densities normalized over the in-range samples.
  [[nodiscard]] std::vector<double> density() const {
    std::vector<double> d(counts_.size(), 0.0);
    const double tot = static_cast<double>(in_range());
    if (tot == 0.0) return d;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      d[i] = static_cast<double>(counts_[i]) / (tot * (edges_[i + 1] - edges_[i]));
    }
    return d;
  }

 private:
  std::vector<double> edges_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t under_ = 0;
  std::uint64_t over_ = 0;
};

/// Joint histogram on declared edges in both coordinates.
class Histogram2D {
 public:
  Histogram2D() = default;
  Histogram2D(std::vector<double> ex, std::vector<double> ey)
      : ex_(std::move(ex)), ey_(std::move(ey)) {
    (void)Histogram(ex_);
    (void)Histogram(ey_);
    counts_.assign((ex_.size() - 1) * (ey_.size() - 1), 0);
  }

  [[nodiscard]] bool empty_edges() const { return ex_.empty(); }

  void add(double x, double y) {
    if (ex_.empty()) return;
    if (x < ex_.front() || x >= ex_.back() || y < ey_.front() || y >= ey_.back()) {
      ++outside_;
      return;
    }
    const auto i = static_cast<std::size_t>(std::upper_bound(ex_.begin(), ex_.end(), x) - ex_.begin()) - 1;
    const auto j = static_cast<std::size_t>(std::upper_bound(ey_.begin(), ey_.end(), y) - ey_.begin()) - 1;
    ++counts_[i * (ey_.size() - 1) + j];
  }

  void merge(const Histogram2D& o) {
    if (o.ex_.empty()) return;
    if (ex_.empty()) {
      *this = o;
      return;
    }
    if (o.ex_ != ex_ || o.ey_ != ey_) throw ConfigError("histogram: cannot merge different edges");
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += o.counts_[k];
    outside_ += o.outside_;
  }

  [[nodiscard]] const std::vector<double>& edges_x() const { return ex_; }
  [[nodiscard]] const std::vector<double>& edges_y() const { return ey_; }
  [[nodiscard]] std::uint64_t outside() const { return outside_; }

  [[nodiscard]] std::vector<double> density() const {
    std::uint64_t tot = 0;
    for (auto c : counts_) tot += c;
    std::vector<double> d(counts_.size(), 0.0);
    if (tot == 0) return d;
    const std::size_t ny = ey_.size() - 1;
    for (std::size_t k = 0; k < counts_.size(); ++k) {
      const std::size_t i = k / ny;
      const std::size_t j = k % ny;
      const double area = (ex_[i + 1] - ex_[i]) * (ey_[j + 1] - ey_[j]);
      d[k] = static_cast<double>(counts_[k]) / (static_cast<double>(tot) * area);
    }
    return d;
  }

 private:
  std::vector<double> ex_;
  std::vector<double> ey_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t outside_ = 0;
};

struct RecorderConfig {
  double burn_in = 0.0;         // samples with time < burn_in are discarded
  double acf_stride = 1.0;      // time between retained ACF samples (0: no ACF)
  std::size_t batch_len = 100000;  // samples per batch for standard errors
  std::vector<double> exp_q;    // exponential-moment channels for X
  std::vector<double> hist_x;   // histogram edges for X (empty: none)
  std::vector<double> hist_y;   // histogram edges for the second channel
  bool joint = false;           // joint (X, Y) histogram on hist_x x hist_y
};

/// Streaming statistics of X (and optionally a second channel Y) along one
/// or more paths. Merging appends the other recorder's batches and series,
/// so a fixed merge order gives a fixed result.
class Recorder {
 public:
  Recorder() = default;
  explicit Recorder(RecorderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.batch_len == 0) throw ConfigError("recorder: batch_len must be positive");
    if (!cfg_.hist_x.empty()) hx_ = Histogram(cfg_.hist_x);
    if (!cfg_.hist_y.empty()) hy_ = Histogram(cfg_.hist_y);
    if (cfg_.joint && !cfg_.hist_x.empty() && !cfg_.hist_y.empty()) {
      hxy_ = Histogram2D(cfg_.hist_x, cfg_.hist_y);
    }
    exp_sum_.resize(cfg_.exp_q.size());
    batch_exp_.resize(cfg_.exp_q.size());
    cur_exp_.assign(cfg_.exp_q.size(), CompensatedSum{});
  }

  [[nodiscard]] const RecorderConfig& config() const { return cfg_; }

  /// Start a new path: resets the ACF sampling clock.
  void begin_path() {
    flush_batch();
    series_.emplace_back();
    next_acf_time_ = std::numeric_limits<double>::quiet_NaN();
  }

  void record(double time, double x, double y = 0.0) {
    if (time < cfg_.burn_in) return;
    all_.add(x, y);
    cur_.add(x, y);
    for (std::size_t k = 0; k < cfg_.exp_q.size(); ++k) {
      const double e = cfg_.exp_q[k] == 0.0 ? 1.0 : std::exp(cfg_.exp_q[k] * x);
      exp_sum_[k].add(e);
      cur_exp_[k].add(e);
    }
    hx_.add(x);
    hy_.add(y);
    hxy_.add(x, y);
    if (cfg_.acf_stride > 0.0) {
      if (series_.empty()) series_.emplace_back();
      if (std::isnan(next_acf_time_)) next_acf_time_ = time;
      if (time >= next_acf_time_ - 1e-9 * cfg_.acf_stride) {
        series_.back().push_back(x);
        next_acf_time_ += cfg_.acf_stride;
      }
    }
    if (cur_.n >= cfg_.batch_len) flush_batch();
  }

  void merge(const Recorder& o) {
    flush_batch();
    Recorder other = o;
    other.flush_batch();
    all_.merge(other.all_);
    for (std::size_t k = 0; k < exp_sum_.size(); ++k) {
      exp_sum_[k].add(other.exp_sum_[k]);
      batch_exp_[k].insert(batch_exp_[k].end(), other.batch_exp_[k].begin(),
                           other.batch_exp_[k].end());
    }
    batches_.insert(batches_.end(), other.batches_.begin(), other.batches_.end());
    hx_.merge(other.hx_);
    hy_.merge(other.hy_);
    hxy_.merge(other.hxy_);
    for (auto& s : other.series_) {
      if (!s.empty()) series_.push_back(std::move(s));
    }
  }

  [[nodiscard]] std::uint64_t count() const { return all_.n; }
  [[nodiscard]] const Moments& moments() const { return all_; }
  [[nodiscard]] const Histogram& hist_x() const { return hx_; }
  [[nodiscard]] const Histogram& hist_y() const { return hy_; }
  [[nodiscard]] const Histogram2D& hist_joint() const { return hxy_; }
  [[nodiscard]] const std::vector<std::vector<double>>& series() const { return series_; }

  [[nodiscard]] double exp_moment(std::size_t k) const {
    return exp_sum_[k].value() / static_cast<double>(all_.n);
  }

  /// Completed batches plus the partial one (copies, recorder untouched).
  [[nodiscard]] std::vector<Moments> batches() const {
    auto b = batches_;
    if (cur_.n > 0) b.push_back(cur_);
    return b;
  }

  [[nodiscard]] std::vector<std::pair<std::uint64_t, double>> exp_batches(std::size_t k) const {
    auto b = batch_exp_[k];
    if (cur_.n > 0) b.emplace_back(cur_.n, cur_exp_[k].value() / static_cast<double>(cur_.n));
    return b;
  }

 private:
  void flush_batch() {
    if (cur_.n == 0) return;
    batches_.push_back(cur_);
    for (std::size_t k = 0; k < cur_exp_.size(); ++k) {
      batch_exp_[k].emplace_back(cur_.n, cur_exp_[k].value() / static_cast<double>(cur_.n));
      cur_exp_[k] = CompensatedSum{};
    }
    cur_ = Moments{};
  }

  RecorderConfig cfg_;
  Moments all_;
  Moments cur_;
  std::vector<Moments> batches_;
  std::vector<CompensatedSum> exp_sum_;
  std::vector<CompensatedSum> cur_exp_;
  std::vector<std::vector<std::pair<std::uint64_t, double>>> batch_exp_;
  Histogram hx_;
  Histogram hy_;
  Histogram2D hxy_;
  std::vector<std::vector<double>> series_;
  double next_acf_time_ = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// Standard error of a weighted mean of batch statistics.
inline double batch_std_error(const std::vector<std::pair<double, double>>& wv) {
  if (wv.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double wsum = 0.0;
  double mean = 0.0;
  for (const auto& [w, v] : wv) {
    wsum += w;
    mean += w * v;
  }
  mean /= wsum;
  double ss = 0.0;
  for (const auto& [w, v] : wv) ss += w * (v - mean) * (v - mean);
  const double k = static_cast<double>(wv.size());
  return std::sqrt(ss / wsum / (k - 1.0));
}

}  // namespace detail

struct StatEntry {
  std::string name;
  double value;
  double std_error;  // NaN when fewer than two batches exist
};

struct AcfPoint {
  double lag;
  double estimate;
  double exact;  // NaN when no closed form applies
};

/// Biased (divide-by-n) autocorrelation of the retained series, pooled over
/// paths around the pooled mean. Lags are in units of the ACF stride.
inline std::vector<AcfPoint> acf_estimate(const std::vector<std::vector<double>>& series,
                                          std::size_t max_lag, double stride = 1.0) {
  std::size_t total = 0;
  CompensatedSum sum;
  for (const auto& s : series) {
    total += s.size();
    for (double v : s) sum.add(v);
  }
  if (total < 10 * std::max<std::size_t>(max_lag, 1)) {
    std::ostringstream os;
    os << "acf_estimate: " << total << " retained samples, need at least " << 10 * max_lag;
    throw DomainError(os.str());
  }
  const double mean = sum.value() / static_cast<double>(total);
  std::vector<double> c(max_lag + 1, 0.0);
  for (const auto& s : series) {
    const std::size_t n = s.size();
    for (std::size_t l = 0; l <= max_lag && l < n; ++l) {
      double acc = 0.0;
      for (std::size_t t = 0; t + l < n; ++t) acc += (s[t] - mean) * (s[t + l] - mean);
      c[l] += acc;
    }
  }
  if (!(c[0] > 0.0)) throw DomainError("acf_estimate: series has zero variance");
  std::vector<AcfPoint> out(max_lag + 1);
  for (std::size_t l = 0; l <= max_lag; ++l) {
    out[l] = {static_cast<double>(l) * stride, l == 0 ? 1.0 : c[l] / c[0],
              std::numeric_limits<double>::quiet_NaN()};
  }
  return out;
}

inline std::vector<AcfPoint> acf_estimate(const Recorder& rec, std::size_t max_lag) {
  return acf_estimate(rec.series(), max_lag, rec.config().acf_stride);
}

/// Root-mean-square difference between estimated and exact ACF values.
inline double acf_rms_error(const std::vector<AcfPoint>& acf) {
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& p : acf) {
    if (std::isnan(p.exact)) continue;
    ss += (p.estimate - p.exact) * (p.estimate - p.exact);
    ++n;
  }
  return n > 0 ? std::sqrt(ss / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN();
}

struct StatsReport {
  std::vector<StatEntry> entries;
  std::vector<AcfPoint> acf;

  [[nodiscard]] const StatEntry* find(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
  [[nodiscard]] double value(const std::string& name) const {
    const auto* e = find(name);
    if (e == nullptr) throw DomainError("stats: no statistic named " + name);
    return e->value;
  }
  [[nodiscard]] double std_error(const std::string& name) const {
    const auto* e = find(name);
    if (e == nullptr) throw DomainError("stats: no statistic named " + name);
    return e->std_error;
  }
};

inline std::string exp_moment_name(double q) {
  std::ostringstream os;
  os << "exp_moment_q=" << q;
  return os.str();
}

/// Mean, variance (and second-channel / covariance when `two_channel`),
/// exponential moments, each with a batch-means standard error.
inline StatsReport finalize(const Recorder& rec, bool two_channel = false,
                            std::size_t max_lag = 0) {
  if (rec.count() == 0) throw DomainError("finalize: no retained samples");
  StatsReport rep;
  const auto& m = rec.moments();
  const auto batches = rec.batches();
  auto se = [&](auto fn) {
    std::vector<std::pair<double, double>> wv;
    wv.reserve(batches.size());
    for (const auto& b : batches) wv.emplace_back(static_cast<double>(b.n), fn(b));
    return detail::batch_std_error(wv);
  };
  rep.entries.push_back({"mean", m.mean_x, se([](const Moments& b) { return b.mean_x; })});
  rep.entries.push_back({"variance", m.var_x(), se([](const Moments& b) { return b.var_x(); })});
  if (two_channel) {
    rep.entries.push_back({"mean_y", m.mean_y, se([](const Moments& b) { return b.mean_y; })});
    rep.entries.push_back(
        {"variance_y", m.var_y(), se([](const Moments& b) { return b.var_y(); })});
    rep.entries.push_back({"covariance", m.cov(), se([](const Moments& b) { return b.cov(); })});
  }
  for (std::size_t k = 0; k < rec.config().exp_q.size(); ++k) {
    std::vector<std::pair<double, double>> wv;
    for (const auto& [n, v] : rec.exp_batches(k)) wv.emplace_back(static_cast<double>(n), v);
    rep.entries.push_back(
        {exp_moment_name(rec.config().exp_q[k]), rec.exp_moment(k), detail::batch_std_error(wv)});
  }
  rep.entries.push_back({"samples", static_cast<double>(rec.count()),
                         std::numeric_limits<double>::quiet_NaN()});
  if (max_lag > 0) rep.acf = acf_estimate(rec, max_lag);
  return rep;
}

/// Sample mean and variance with their standard errors (i.i.d. samples).
struct SampleSummary {
  double mean = 0.0;
  double variance = 0.0;
  double mean_se = 0.0;
  double variance_se = 0.0;
  std::size_t n = 0;
};

inline SampleSummary summarize(const std::vector<double>& xs) {
  SampleSummary s;
  s.n = xs.size();
  if (s.n < 2) throw DomainError("summarize: need at least two samples");
  Moments m;
  for (double x : xs) m.add(x);
  double m4 = 0.0;
  for (double x : xs) {
    const double d = x - m.mean_x;
    m4 += d * d * d * d;
  }
  m4 /= static_cast<double>(s.n);
  const double n = static_cast<double>(s.n);
  s.mean = m.mean_x;
  s.variance = m.m2_x / (n - 1.0);
  s.mean_se = std::sqrt(s.variance / n);
  s.variance_se = std::sqrt(std::max(0.0, (m4 - s.variance * s.variance) / n));
  return s;
}

namespace csv {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::ofstream open(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open output file " + path);
  return f;
}

inline void write_stats(const std::string& path, const StatsReport& rep) {
  auto f = open(path);
  f << "statistic,value,std_error\n";
  for (const auto& e : rep.entries) f << e.name << ',' << fmt(e.value) << ',' << fmt(e.std_error) << '\n';
}

inline void write_acf(const std::string& path, const std::vector<AcfPoint>& acf) {
  auto f = open(path);
  f << "lag,estimate,exact\n";
  for (const auto& p : acf) f << fmt(p.lag) << ',' << fmt(p.estimate) << ',' << fmt(p.exact) << '\n';
}

inline void write_pdf(const std::string& path, const Histogram& h) {
  auto f = open(path);
  f << "bin_left,bin_right,density\n";
  const auto d = h.density();
  for (std::size_t i = 0; i < d.size(); ++i) {
    f << fmt(h.edges()[i]) << ',' << fmt(h.edges()[i + 1]) << ',' << fmt(d[i]) << '\n';
  }
}

inline void write_pdf_joint(const std::string& path, const Histogram2D& h) {
  auto f = open(path);
  f << "x_left,x_right,y_left,y_right,density\n";
  const auto d = h.density();
  const auto& ex = h.edges_x();
  const auto& ey = h.edges_y();
  const std::size_t ny = ey.size() - 1;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const std::size_t i = k / ny;
    const std::size_t j = k % ny;
    f << fmt(ex[i]) << ',' << fmt(ex[i + 1]) << ',' << fmt(ey[j]) << ',' << fmt(ey[j + 1]) << ','
      << fmt(d[k]) << '\n';
  }
}

}  // namespace csv

}  // namespace superlift
