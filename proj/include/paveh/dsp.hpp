// Savitzky-Golay smoothing, extrema capture, pass labelling, elastic
// recovery envelopes and gauge calibration. Everything here is pure.
#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "paveh/gauge.hpp"

namespace paveh::dsp {

class DspError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class SeriesTooShort : public DspError {
public:
  using DspError::DspError;
};

struct Series {
  std::vector<double> t;  // seconds elapsed, strictly increasing
  std::vector<double> y;
  std::string unit;

  std::size_t size() const noexcept { return y.size(); }
  void validate() const;  // throws DspError
};

struct DspConfig {
  int window = 1001;  // odd
  int polyorder = 2;  // 1 <= polyorder < window
  double min_separation_s = 5.0;
  double prominence_fraction = 0.3;  // of max(y) - min(y)

  void validate() const;
};

DspConfig default_config(SensorKind kind);

/// Centre-row smoothing weights of length `window`.
Eigen::VectorXd savgol_weights(int window, int polyorder);

/// Rows of the projection onto polynomials of degree `polyorder` over one
/// window: row p evaluates the fit at position p. Row window/2 equals
/// savgol_weights.
Eigen::MatrixXd savgol_projection(int window, int polyorder);

/// Interior points are the centred convolution; the first and last
/// window/2 points take the fit of the first and last full window.
std::vector<double> smooth(const std::vector<double>& y, int window, int polyorder);
Series smooth(const Series& series, const DspConfig& config);

enum class ExtremumKind { Maxima, Minima };
enum class PassLabel { Unlabeled, First, Last };

std::string_view to_string(ExtremumKind kind) noexcept;  // maxima, minima
std::string_view to_string(PassLabel label) noexcept;    // first20, last20, unlabeled

struct Extremum {
  ExtremumKind kind = ExtremumKind::Maxima;
  std::size_t index = 0;
  double t = 0.0;
  double value = 0.0;
  PassLabel label = PassLabel::Unlabeled;

  friend bool operator==(const Extremum&, const Extremum&) = default;
};

/// Topographic prominence of every interior local maximum of `y` (plateaus
/// reduced to their middle sample). Returned as (index, prominence).
std::vector<std::pair<std::size_t, double>> peak_prominences(const std::vector<double>& y);

/// Maxima and minima sorted by t.
std::vector<Extremum> detect_extrema(const Series& series, const DspConfig& config);

/// Labels the first `first_n` maxima First and the last `last_n` of the rest
/// Last. A minimum takes the label of the closest maximum before it.
std::vector<Extremum> select_passes(std::vector<Extremum> extrema, std::size_t first_n = 20,
                                    std::size_t last_n = 20);

inline constexpr std::array<double, 5> kEnvelopeFractions{0.30, 0.45, 0.60, 0.75, 0.90};

struct EnvelopePoint {
  std::size_t pass = 0;  // ordinal among labelled maxima
  PassLabel label = PassLabel::Unlabeled;
  double fraction = 0.0;
  double t = 0.0;
  double value = 0.0;
};

struct Envelope {
  std::vector<EnvelopePoint> points;
  std::size_t truncated = 0;  // points that fell past the series end
};

/// Linear interpolation of the series at `t` (clamped to its ends).
double sample_at(const Series& series, double t);

/// For every labelled maximum, samples the curve at the given fractions of
/// the interval to the next maximum. A final maximum with no successor
/// reuses the preceding interval.
Envelope extract_envelope(const Series& smoothed, const std::vector<Extremum>& extrema,
                          const std::vector<double>& fractions = {kEnvelopeFractions.begin(),
                                                                  kEnvelopeFractions.end()});

struct CalibrationSpec {
  double cal_coeff = 1.0;
  double rated_output = 0.0;  // > 0
};

struct Calibrated {
  double value = 0.0;
  bool out_of_range = false;
};

Calibrated calibrate(double raw, const CalibrationSpec& spec);

}  // namespace paveh::dsp
