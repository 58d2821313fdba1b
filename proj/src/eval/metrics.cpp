// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "paco/eval.hpp"

namespace paco {

namespace {

F1Report score(std::vector<std::size_t> tp, std::vector<std::size_t> fp, std::vector<std::size_t> fn,
               const F1Options& opt) {
  F1Report r;
  const std::size_t k = tp.size();
  r.per_class.resize(k);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) {
      r.per_class[c] = opt.absent_is_one ? 1.0 : std::numeric_limits<double>::quiet_NaN();
    } else {
      r.per_class[c] = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    }
    if (opt.exclude_background && c == opt.background) continue;
    if (std::isnan(r.per_class[c])) continue;
    sum += r.per_class[c];
    ++counted;
  }
  r.mean = counted ? sum / static_cast<double>(counted) : std::numeric_limits<double>::quiet_NaN();
  r.tp = std::move(tp);
  r.fp = std::move(fp);
  r.fn = std::move(fn);
  return r;
}

void count(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, std::size_t k,
           std::vector<std::size_t>& tp, std::vector<std::size_t>& fp, std::vector<std::size_t>& fn) {
  if (pred.size() != gt.size())
    throw ShapeError("f1: prediction has " + std::to_string(pred.size()) + " pixels, ground truth " +
                     std::to_string(gt.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t p = pred[i], g = gt[i];
    if (p >= k || g >= k) throw std::out_of_range("f1: label outside the class vocabulary");
    if (p == g) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
}

}  // namespace

F1Report f1_per_class(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                      std::size_t num_classes, const F1Options& opt) {
  std::vector<std::size_t> tp(num_classes), fp(num_classes), fn(num_classes);
  count(pred, gt, num_classes, tp, fp, fn);
  return score(std::move(tp), std::move(fp), std::move(fn), opt);
}

F1Report f1_pooled(const std::vector<std::vector<std::uint8_t>>& preds,
                   const std::vector<std::vector<std::uint8_t>>& gts, std::size_t num_classes,
                   const F1Options& opt) {
  if (preds.size() != gts.size()) throw ShapeError("f1_pooled: image counts differ");
  std::vector<std::size_t> tp(num_classes), fp(num_classes), fn(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) count(preds[i], gts[i], num_classes, tp, fp, fn);
  return score(std::move(tp), std::move(fp), std::move(fn), opt);
}

std::string norm_mode_name(NormMode m) {
  switch (m) {
    case NormMode::kInterOcular: return "inter_ocular";
    case NormMode::kDiag: return "diag";
    case NormMode::kBox: return "box";
  }
  return "?";
}

NormMode parse_norm_mode(const std::string& s) {
  if (s == "inter_ocular") return NormMode::kInterOcular;
  if (s == "diag") return NormMode::kDiag;
  if (s == "box") return NormMode::kBox;
  throw std::invalid_argument("unknown normalization '" + s + "' (inter_ocular|diag|box)");
}

double normalizer(const LandmarkPrediction& p, NormMode mode) {
  double d = 0.0;
  switch (mode) {
    case NormMode::kInterOcular:
      if (p.norm.inter_ocular) {
        d = *p.norm.inter_ocular;
      } else {
        if (p.gt.rows <= kRightEyeCenter)
          throw std::invalid_argument("nme: inter-ocular normalization needs eye-centre landmarks");
        d = std::hypot(p.gt(kLeftEyeCenter, 0) - p.gt(kRightEyeCenter, 0),
                       p.gt(kLeftEyeCenter, 1) - p.gt(kRightEyeCenter, 1));
      }
      break;
    case NormMode::kDiag:
    case NormMode::kBox: {
      const auto& given = mode == NormMode::kDiag ? p.norm.diag : p.norm.box;
      if (given) {
        d = *given;
        break;
      }
      double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
      for (std::size_t l = 0; l < p.gt.rows; ++l) {
        x0 = std::min(x0, p.gt(l, 0)), x1 = std::max(x1, p.gt(l, 0));
        y0 = std::min(y0, p.gt(l, 1)), y1 = std::max(y1, p.gt(l, 1));
      }
      const double w = x1 - x0, h = y1 - y0;
      d = mode == NormMode::kDiag ? std::hypot(w, h) : std::sqrt(std::max(0.0, w * h));
      break;
    }
  }
  if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument("nme: normalizer must be positive");
  return d;
}

double sample_nme(const LandmarkPrediction& p, NormMode mode) {
  if (p.pred.rows != p.gt.rows || p.pred.cols != 2 || p.gt.cols != 2 || p.gt.rows == 0)
    throw ShapeError("nme: prediction and ground truth must both be [L, 2]");
  const double norm = normalizer(p, mode);
  double err = 0.0;
  for (std::size_t l = 0; l < p.gt.rows; ++l)
    err += std::hypot(p.pred(l, 0) - p.gt(l, 0), p.pred(l, 1) - p.gt(l, 1));
  return err / static_cast<double>(p.gt.rows) / norm;
}

double nme(const std::vector<LandmarkPrediction>& preds, NormMode mode) {
  if (preds.empty()) throw std::invalid_argument("nme: no samples");
  double sum = 0.0;
  for (const auto& p : preds) sum += sample_nme(p, mode);
  return 100.0 * sum / static_cast<double>(preds.size());
}

AucFr auc_fr(const std::vector<double>& errors, double threshold) {
  if (errors.empty()) throw std::invalid_argument("auc_fr: empty error list");
  if (!(threshold > 0.0)) throw std::invalid_argument("auc_fr: threshold must be positive");
  // CED(e) = #{e_i <= e} / N, so each sample contributes (t - e_i)^+ to the integral.
  double area = 0.0;
  std::size_t failures = 0;
  for (double e : errors) {
    if (!(e >= 0.0)) throw std::invalid_argument("auc_fr: errors must be non-negative numbers");
    if (e > threshold) ++failures;
    area += std::max(0.0, threshold - e);
  }
  const double n = static_cast<double>(errors.size());
  return {area / (n * threshold), static_cast<double>(failures) / n};
}

}  // namespace paco
