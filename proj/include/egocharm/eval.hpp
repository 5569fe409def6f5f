#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "egocharm/error.hpp"

namespace egocharm {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return k_; }
  std::size_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts_) n += c;
    return n;
  }
  std::size_t trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < k_; ++i) n += at(i, i);
    return n;
  }
  std::size_t support(std::size_t truth) const {
    std::size_t n = 0;
    for (std::size_t j = 0; j < k_; ++j) n += at(truth, j);
    return n;
  }
  std::size_t predicted(std::size_t cls) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < k_; ++i) n += at(i, cls);
    return n;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::size_t> counts_;
};

struct EvalReport {
  ConfusionMatrix confusion;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_f1 = 0.0;
  /// Fraction of correct predictions in [0, 1].
  double micro_accuracy = 0.0;
};

namespace detail {
inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace detail

/// Builds the report from a confusion matrix. Per-class scores use 0 for any 0/0.
inline EvalReport report_from_confusion(const ConfusionMatrix& cm) {
  require(cm.total() > 0, ErrorCode::EmptyEvaluation, "no samples to evaluate");
  EvalReport r;
  r.confusion = cm;
  const std::size_t k = cm.classes();
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double predicted = static_cast<double>(cm.predicted(c));
    const double support = static_cast<double>(cm.support(c));
    const double p = detail::safe_ratio(tp, predicted);
    const double rc = detail::safe_ratio(tp, support);
    // Equals 2PR/(P+R) but with a single rounding.
    const double f = detail::safe_ratio(2.0 * tp, predicted + support);
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(f);
    f1_sum += f;
  }
  r.macro_f1 = f1_sum / static_cast<double>(k);
  r.micro_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  return r;
}

inline EvalReport evaluate(std::span<const int> predictions, std::span<const int> targets, std::size_t classes) {
  require(predictions.size() == targets.size(), ErrorCode::InvalidArgument, "prediction and target counts differ");
  require(!targets.empty(), ErrorCode::EmptyEvaluation, "no samples to evaluate");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    require(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < classes && predictions[i] >= 0 &&
                static_cast<std::size_t>(predictions[i]) < classes,
            ErrorCode::InvalidArgument, "label out of range at index " + std::to_string(i));
    ++cm.at(static_cast<std::size_t>(targets[i]), static_cast<std::size_t>(predictions[i]));
  }
  return report_from_confusion(cm);
}

inline nlohmann::json to_json(const EvalReport& r, const std::vector<std::string>& class_names = {}) {
  nlohmann::json j;
  const std::size_t k = r.confusion.classes();
  std::vector<std::vector<std::size_t>> rows(k, std::vector<std::size_t>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < k; ++c) rows[i][c] = r.confusion.at(i, c);
  j["classes"] = class_names;
  j["confusion"] = rows;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["macro_f1"] = r.macro_f1;
  j["micro_accuracy"] = r.micro_accuracy;
  j["samples"] = r.confusion.total();
  return j;
}

enum class ConfusionMode { Counts, RowPercent };

/// Per-true-class percentages; rows without support are all zero.
inline std::vector<std::vector<double>> row_percent(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  std::vector<std::vector<double>> out(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    const double s = static_cast<double>(cm.support(i));
    if (s == 0) continue;
    for (std::size_t j = 0; j < k; ++j) out[i][j] = 100.0 * static_cast<double>(cm.at(i, j)) / s;
  }
  return out;
}

/// CSV with a header row of predicted class names and one row per true class.
inline std::string render_confusion(const ConfusionMatrix& cm, ConfusionMode mode,
                                    const std::vector<std::string>& class_names = {}) {
  const std::size_t k = cm.classes();
  auto name = [&](std::size_t i) { return i < class_names.size() ? class_names[i] : std::to_string(i); };
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t j = 0; j < k; ++j) os << ',' << name(j);
  os << '\n';
  const auto pct = mode == ConfusionMode::RowPercent ? row_percent(cm) : std::vector<std::vector<double>>{};
  for (std::size_t i = 0; i < k; ++i) {
    os << name(i);
    for (std::size_t j = 0; j < k; ++j) {
      if (mode == ConfusionMode::Counts)
        os << ',' << cm.at(i, j);
      else
        os << ',' << std::fixed << std::setprecision(4) << pct[i][j];
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

struct PcaResult {
  std::vector<double> mean;
  /// Two orthonormal directions of largest variance.
  std::array<std::vector<double>, 2> components;
  /// N x 2 projections of the centered samples.
  std::vector<std::array<double, 2>> projections;
  std::array<double, 2> explained_variance{};
  /// Every covariance eigenvalue, descending.
  std::vector<double> eigenvalues;
  double total_variance = 0.0;
};

/// Two-component PCA via eigen-decomposition of the sample covariance.
/// Component signs are fixed so the first non-negligible coordinate is positive.
inline PcaResult pca_2d(const std::vector<std::vector<double>>& samples) {
  require(samples.size() >= 3, ErrorCode::InvalidArgument, "PCA needs at least 3 samples");
  const std::size_t dim = samples.front().size();
  require(dim >= 2, ErrorCode::InvalidArgument, "PCA needs at least 2 dimensions");
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    require(samples[static_cast<std::size_t>(i)].size() == dim, ErrorCode::ShapeMismatch, "ragged PCA input");
    for (std::size_t j = 0; j < dim; ++j) x(i, static_cast<Eigen::Index>(j)) = samples[static_cast<std::size_t>(i)][j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  require(cov.trace() > 1e-18, ErrorCode::DegenerateData, "all samples are identical");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::DegenerateData, "eigen-decomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd values = solver.eigenvalues();
  const Eigen::MatrixXd vectors = solver.eigenvectors();

  PcaResult out;
  out.mean.assign(mean.data(), mean.data() + dim);
  out.total_variance = cov.trace();
  for (Eigen::Index i = values.size(); i-- > 0;) out.eigenvalues.push_back(std::max(0.0, values(i)));
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = vectors.col(values.size() - 1 - c);
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (std::abs(v(j)) > 1e-12) {
        if (v(j) < 0) v = -v;
        break;
      }
    }
    out.components[static_cast<std::size_t>(c)].assign(v.data(), v.data() + dim);
    out.explained_variance[static_cast<std::size_t>(c)] = out.eigenvalues[static_cast<std::size_t>(c)];
  }
  out.projections.resize(samples.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += x(i, static_cast<Eigen::Index>(j)) * out.components[c][j];
      out.projections[static_cast<std::size_t>(i)][c] = s;
    }
  return out;
}

inline nlohmann::json to_json(const PcaResult& p, std::span<const int> labels = {}) {
  nlohmann::json j;
  j["mean"] = p.mean;
  j["components"] = {p.components[0], p.components[1]};
  j["explained_variance"] = {p.explained_variance[0], p.explained_variance[1]};
  j["total_variance"] = p.total_variance;
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < p.projections.size(); ++i) {
    nlohmann::json pt = {{"pc1", p.projections[i][0]}, {"pc2", p.projections[i][1]}};
    if (i < labels.size()) pt["label"] = labels[i];
    pts.push_back(pt);
  }
  j["projections"] = pts;
  return j;
}

/// Mean silhouette coefficient with Euclidean distance; singleton clusters score 0.
inline double silhouette_score(const std::vector<std::vector<double>>& points, std::span<const int> labels) {
  require(points.size() == labels.size() && !points.empty(), ErrorCode::InvalidArgument, "silhouette input mismatch");
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t d = 0; d < points[a].size(); ++d) s += (points[a][d] - points[b][d]) * (points[a][d] - points[b][d]);
    return std::sqrt(s);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto own = static_cast<std::size_t>(labels[i]);
    if (sizes[own] <= 1) continue;
    std::vector<double> sums(static_cast<std::size_t>(k), 0.0);
    for (std::size_t j = 0; j < points.size(); ++j)
      if (j != i) sums[static_cast<std::size_t>(labels[j])] += dist(i, j);
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    if (!std::isfinite(b)) continue;
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(points.size());
}

}  // namespace egocharm
