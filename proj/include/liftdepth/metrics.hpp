#pragma once

#include <sstream>

#include "liftdepth/tensor.hpp"

namespace liftdepth {

// Depth quality metrics over the masked pixels. zeta_i is the fraction of
// pixels with max(d/d*, d*/d) strictly below 1.25^i.
struct MetricReport {
  double rmse = 0.0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse_log = 0.0;   // natural log
  double log10_err = 0.0;  // mean |log10 d - log10 d*|
  double zeta1 = 0.0;
  double zeta2 = 0.0;
  double zeta3 = 0.0;
  std::int64_t pixel_count = 0;

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "rmse " << rmse << "\n"
       << "abs_rel " << abs_rel << "\n"
       << "sq_rel " << sq_rel << "\n"
       << "rmse_log " << rmse_log << "\n"
       << "log10 " << log10_err << "\n"
       << "zeta1 " << zeta1 << "\n"
       << "zeta2 " << zeta2 << "\n"
       << "zeta3 " << zeta3 << "\n"
       << "pixels " << pixel_count << "\n";
    return os.str();
  }

  std::string to_csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << rmse << "," << abs_rel << "," << sq_rel << "," << rmse_log << "," << log10_err
       << "," << zeta1 << "," << zeta2 << "," << zeta3 << "," << pixel_count;
    return os.str();
  }

  static std::string csv_header() {
    return "rmse,abs_rel,sq_rel,rmse_log,log10,zeta1,zeta2,zeta3,pixels";
  }
};

// depth_cap > 0 restricts evaluation to pixels whose ground truth is at most
// the cap (range-limited evaluation).
inline MetricReport compute_metrics(const Tensor& pred, const Tensor& gt,
                                    const Tensor& mask, double depth_cap = 0.0) {
  detail::check_same_shape(pred, gt, "compute_metrics");
  detail::check_same_shape(pred, mask, "compute_metrics");
  MetricReport r;
  double se = 0.0, ar = 0.0, sr = 0.0, sle = 0.0, l10 = 0.0;
  std::int64_t z1 = 0, z2 = 0, z3 = 0, m = 0;
  for (int i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    if (depth_cap > 0.0 && gt[i] > depth_cap) continue;
    double d = pred[i], g = gt[i];
    if (d <= 0.0 || g <= 0.0)
      throw ValueError("compute_metrics: nonpositive depth under mask at pixel " +
                       std::to_string(i));
    double diff = d - g;
    se += diff * diff;
    ar += std::abs(diff) / g;
    sr += diff * diff / g;
    double lg = std::log(d) - std::log(g);
    sle += lg * lg;
    l10 += std::abs(std::log10(d) - std::log10(g));
    double ratio = std::max(d / g, g / d);
    if (ratio < 1.25) ++z1;
    if (ratio < 1.25 * 1.25) ++z2;
    if (ratio < 1.25 * 1.25 * 1.25) ++z3;
    ++m;
  }
  if (m == 0) throw ValueError("compute_metrics: empty mask");
  double dm = double(m);
  r.rmse = std::sqrt(se / dm);
  r.abs_rel = ar / dm;
  r.sq_rel = sr / dm;
  r.rmse_log = std::sqrt(sle / dm);
  r.log10_err = l10 / dm;
  r.zeta1 = double(z1) / dm;
  r.zeta2 = double(z2) / dm;
  r.zeta3 = double(z3) / dm;
  r.pixel_count = m;
  return r;
}

// Aggregate over per-sample reports: metrics are averaged with equal sample
// weight (the convention used for per-image evaluation protocols).
inline MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ValueError("average_reports: no reports");
  MetricReport r;
  for (const MetricReport& x : reports) {
    r.rmse += x.rmse;
    r.abs_rel += x.abs_rel;
    r.sq_rel += x.sq_rel;
    r.rmse_log += x.rmse_log;
    r.log10_err += x.log10_err;
    r.zeta1 += x.zeta1;
    r.zeta2 += x.zeta2;
    r.zeta3 += x.zeta3;
    r.pixel_count += x.pixel_count;
  }
  double n = double(reports.size());
  r.rmse /= n;
  r.abs_rel /= n;
  r.sq_rel /= n;
  r.rmse_log /= n;
  r.log10_err /= n;
  r.zeta1 /= n;
  r.zeta2 /= n;
  r.zeta3 /= n;
  return r;
}

// Per-pixel absolute error, min-max normalized over the masked pixels to
// bytes 0..255. Invalid pixels are black; a constant error field falls back
// to mid-gray.
inline Tensor error_map(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  detail::check_same_shape(pred, gt, "error_map");
  detail::check_same_shape(pred, mask, "error_map");
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (int i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    double e = std::abs(pred[i] - gt[i]);
    if (first) {
      lo = hi = e;
      first = false;
    } else {
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
  }
  if (first) throw ValueError("error_map: empty mask");
  Tensor out = Tensor::zeros(pred.shape());
  bool constant = (hi - lo) <= 0.0;
  for (int i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) {
      out[i] = 0.0;
      continue;
    }
    if (constant) {
      out[i] = hi == 0.0 ? 0.0 : 128.0;  // exact-zero error stays black
      continue;
    }
    double e = std::abs(pred[i] - gt[i]);
    out[i] = double(std::lround((e - lo) / (hi - lo) * 255.0));
  }
  return out;
}

}  // namespace liftdepth
