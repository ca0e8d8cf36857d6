#include "paveh/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

namespace paveh::dsp {

void Series::validate() const {
  if (t.size() != y.size())
    throw DspError(fmt::format("series has {} times but {} values", t.size(), y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i]))
      throw DspError(fmt::format("non-finite sample at index {}", i));
    if (i > 0 && !(t[i] > t[i - 1]))
      throw DspError(fmt::format("time not strictly increasing at index {}", i));
  }
}

void DspConfig::validate() const {
  if (window < 1 || window % 2 == 0)
    throw DspError(fmt::format("window must be odd and positive, got {}", window));
  if (polyorder < 1 || polyorder >= window)
    throw DspError(fmt::format("polyorder must satisfy 1 <= order < window, got {}", polyorder));
  if (!(min_separation_s >= 0)) throw DspError("min separation must be >= 0");
  if (!(prominence_fraction >= 0 && prominence_fraction <= 1))
    throw DspError("prominence fraction must lie in [0, 1]");
}

DspConfig default_config(SensorKind kind) {
  DspConfig c;
  switch (kind) {
    case SensorKind::PC: c.window = 101; break;
    case SensorKind::TC: c.window = 51; break;
    case SensorKind::FWD: c.min_separation_s = 1.0; break;
    default: break;
  }
  return c;
}

Eigen::MatrixXd savgol_projection(int window, int polyorder) {
  DspConfig{window, polyorder}.validate();
  const int half = window / 2;
  const int cols = polyorder + 1;
  // Abscissae scaled to [-1, 1] keep the Vandermonde matrix well conditioned.
  Eigen::MatrixXd a(window, cols);
  for (int i = 0; i < window; ++i) {
    const double x = half == 0 ? 0.0 : static_cast<double>(i - half) / half;
    double p = 1.0;
    for (int j = 0; j < cols; ++j, p *= x) a(i, j) = p;
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(window, cols);
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(cols, cols);
  const Eigen::MatrixXd pinv = r.triangularView<Eigen::Upper>().solve(q.transpose());
  return a * pinv;
}

Eigen::VectorXd savgol_weights(int window, int polyorder) {
  return savgol_projection(window, polyorder).row(window / 2).transpose();
}

std::vector<double> smooth(const std::vector<double>& y, int window, int polyorder) {
  DspConfig{window, polyorder}.validate();
  const auto n = y.size();
  const auto w = static_cast<std::size_t>(window);
  if (n < w)
    throw SeriesTooShort(fmt::format("series of {} samples is shorter than window {}", n, window));
  const Eigen::MatrixXd h = savgol_projection(window, polyorder);
  const std::size_t half = w / 2;
  const Eigen::VectorXd weights = h.row(static_cast<Eigen::Index>(half)).transpose();

  std::vector<double> out(n);
  const Eigen::Map<const Eigen::VectorXd> head(y.data(), static_cast<Eigen::Index>(w));
  const Eigen::Map<const Eigen::VectorXd> tail(y.data() + (n - w), static_cast<Eigen::Index>(w));
  for (std::size_t p = 0; p < half; ++p) {
    out[p] = h.row(static_cast<Eigen::Index>(p)).dot(head);
    out[n - half + p] = h.row(static_cast<Eigen::Index>(half + 1 + p)).dot(tail);
  }
  for (std::size_t i = half; i + half < n; ++i)
    out[i] = weights.dot(
        Eigen::Map<const Eigen::VectorXd>(y.data() + (i - half), static_cast<Eigen::Index>(w)));
  return out;
}

Series smooth(const Series& series, const DspConfig& config) {
  series.validate();
  config.validate();
  return Series{series.t, smooth(series.y, config.window, config.polyorder), series.unit};
}

std::string_view to_string(ExtremumKind kind) noexcept {
  return kind == ExtremumKind::Maxima ? "maxima" : "minima";
}

std::string_view to_string(PassLabel label) noexcept {
  switch (label) {
    case PassLabel::First: return "first20";
    case PassLabel::Last: return "last20";
    case PassLabel::Unlabeled: return "unlabeled";
  }
  return "?";
}

namespace {

// base[i] = min of y over (nearest strictly greater element, i], scanning
// in the given direction. Each stack entry carries the minimum of the span
// it dominates, so popped spans merge in O(1).
std::vector<double> dominated_minimum(const std::vector<double>& y, bool forward) {
  const auto n = y.size();
  std::vector<double> base(n);
  std::vector<std::pair<double, double>> stack;  // (value, span minimum)
  for (std::size_t step = 0; step < n; ++step) {
    const auto i = forward ? step : n - 1 - step;
    double span_min = y[i];
    while (!stack.empty() && stack.back().first <= y[i]) {
      span_min = std::min(span_min, stack.back().second);
      stack.pop_back();
    }
    base[i] = span_min;
    stack.emplace_back(y[i], span_min);
  }
  return base;
}

std::vector<Extremum> greedy_separation(std::vector<Extremum> candidates, double min_sep) {
  std::sort(candidates.begin(), candidates.end(), [](const Extremum& a, const Extremum& b) {
    return a.value != b.value ? a.value > b.value : a.index < b.index;
  });
  std::set<double> taken;
  std::vector<Extremum> kept;
  for (const auto& c : candidates) {
    auto it = taken.lower_bound(c.t);
    if (it != taken.end() && *it - c.t < min_sep) continue;
    if (it != taken.begin() && c.t - *std::prev(it) < min_sep) continue;
    taken.insert(c.t);
    kept.push_back(c);
  }
  return kept;
}

// Greedy ranking uses the transformed `y`, so minima keep the deepest.
std::vector<Extremum> find_maxima(const Series& s, const std::vector<double>& y,
                                  ExtremumKind kind, const DspConfig& config) {
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  if (!(range > 0)) return {};
  const double threshold = config.prominence_fraction * range;
  std::vector<Extremum> candidates;
  for (const auto& [i, prom] : peak_prominences(y))
    if (prom > 0 && prom >= threshold)
      candidates.push_back({kind, i, s.t[i], y[i], PassLabel::Unlabeled});
  auto kept = greedy_separation(std::move(candidates), config.min_separation_s);
  for (auto& c : kept) c.value = s.y[c.index];
  return kept;
}

}  // namespace

std::vector<std::pair<std::size_t, double>> peak_prominences(const std::vector<double>& y) {
  const auto n = y.size();
  std::vector<std::pair<std::size_t, double>> out;
  if (n < 3) return out;

  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(y[i - 1] < y[i])) continue;
    std::size_t j = i;
    while (j + 1 < n && y[j + 1] == y[i]) ++j;
    if (j + 1 < n && y[j + 1] < y[i]) peaks.push_back((i + j) / 2);
    i = j;
  }
  if (peaks.empty()) return out;

  const auto left = dominated_minimum(y, true);
  const auto right = dominated_minimum(y, false);
  for (auto p : peaks) out.emplace_back(p, y[p] - std::max(left[p], right[p]));
  return out;
}

std::vector<Extremum> detect_extrema(const Series& series, const DspConfig& config) {
  series.validate();
  config.validate();
  auto maxima = find_maxima(series, series.y, ExtremumKind::Maxima, config);
  std::vector<double> neg(series.y.size());
  std::transform(series.y.begin(), series.y.end(), neg.begin(), [](double v) { return -v; });
  auto minima = find_maxima(series, neg, ExtremumKind::Minima, config);
  maxima.insert(maxima.end(), minima.begin(), minima.end());
  std::sort(maxima.begin(), maxima.end(),
            [](const Extremum& a, const Extremum& b) { return a.index < b.index; });
  return maxima;
}

std::vector<Extremum> select_passes(std::vector<Extremum> extrema, std::size_t first_n,
                                    std::size_t last_n) {
  std::vector<std::size_t> maxima;
  for (std::size_t i = 0; i < extrema.size(); ++i)
    if (extrema[i].kind == ExtremumKind::Maxima) maxima.push_back(i);
  const auto m = maxima.size();
  const auto first = std::min(first_n, m);
  const auto last_begin = std::max(first, m >= last_n ? m - last_n : 0);
  for (std::size_t k = 0; k < m; ++k) {
    auto& e = extrema[maxima[k]];
    e.label = k < first ? PassLabel::First : k >= last_begin ? PassLabel::Last : PassLabel::Unlabeled;
  }
  PassLabel current = PassLabel::Unlabeled;
  for (auto& e : extrema) {
    if (e.kind == ExtremumKind::Maxima)
      current = e.label;
    else
      e.label = current;
  }
  return extrema;
}

double sample_at(const Series& s, double t) {
  if (s.t.empty()) throw DspError("cannot sample an empty series");
  if (t <= s.t.front()) return s.y.front();
  if (t >= s.t.back()) return s.y.back();
  const auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
  const auto j = static_cast<std::size_t>(it - s.t.begin());
  const double t0 = s.t[j - 1], t1 = s.t[j];
  const double u = (t - t0) / (t1 - t0);
  return s.y[j - 1] + u * (s.y[j] - s.y[j - 1]);
}

Envelope extract_envelope(const Series& smoothed, const std::vector<Extremum>& extrema,
                          const std::vector<double>& fractions) {
  for (double f : fractions)
    if (!(f > 0 && f < 1)) throw DspError(fmt::format("envelope fraction {} outside (0, 1)", f));
  std::vector<const Extremum*> maxima;
  for (const auto& e : extrema)
    if (e.kind == ExtremumKind::Maxima) maxima.push_back(&e);

  Envelope env;
  if (smoothed.t.empty()) return env;
  std::size_t pass = 0;
  for (std::size_t k = 0; k < maxima.size(); ++k) {
    const auto& peak = *maxima[k];
    if (peak.label == PassLabel::Unlabeled) continue;
    double interval = 0;
    if (k + 1 < maxima.size())
      interval = maxima[k + 1]->t - peak.t;
    else if (k > 0)
      interval = peak.t - maxima[k - 1]->t;
    for (double f : fractions) {
      const double t = peak.t + f * interval;
      if (interval <= 0 || t > smoothed.t.back()) {
        ++env.truncated;
        continue;
      }
      env.points.push_back({pass, peak.label, f, t, sample_at(smoothed, t)});
    }
    ++pass;
  }
  return env;
}

Calibrated calibrate(double raw, const CalibrationSpec& spec) {
  if (!(spec.rated_output > 0)) throw DspError("rated output must be > 0");
  const double v = raw * spec.cal_coeff;
  return {v, std::abs(v) > spec.rated_output};
}

}  // namespace paveh::dsp
