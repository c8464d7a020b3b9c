#pragma once

// Reference training losses for the cascade tasks (face classification, box
// regression, landmark regression, mask classification) with analytic
// gradients, plus confusion-matrix metrics for the mask branch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thermoscreen/error.hpp"

namespace thermoscreen {

inline constexpr double kProbabilityClamp = 1e-7;

struct ScalarLoss {
    double loss = 0.0;
    double dloss_dp = 0.0;
};

// Binary cross-entropy, used for both face/non-face and mask/no-mask outputs.
// p is clamped to [1e-7, 1 - 1e-7]; the gradient is taken at the clamped point.
inline ScalarLoss bce_loss(double p, int y)
{
    if (y != 0 && y != 1) throw InvalidLabel("label must be 0 or 1, got " + std::to_string(y));
    if (std::isnan(p)) throw InvalidLabel("probability is NaN");
    const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double yl = y;
    ScalarLoss r;
    r.loss = -(yl * std::log(q) + (1.0 - yl) * std::log(1.0 - q));
    r.dloss_dp = -yl / q + (1.0 - yl) / (1.0 - q);
    return r;
}

struct VectorLoss {
    double loss = 0.0;
    std::vector<double> gradient;
};

inline constexpr std::size_t kBoxUnits = 4;
inline constexpr std::size_t kLandmarkUnits = 10;

// Squared Euclidean distance; gradient w.r.t. pred.
inline VectorLoss l2_loss(std::span<const double> pred, std::span<const double> truth)
{
    if (pred.size() != truth.size()) {
        throw DimensionMismatch(std::to_string(pred.size()) + " vs " + std::to_string(truth.size()));
    }
    VectorLoss r;
    r.gradient.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        r.loss += d * d;
        r.gradient[i] = 2.0 * d;
    }
    return r;
}

inline VectorLoss box_loss(std::span<const double> pred, std::span<const double> truth)
{
    if (pred.size() != kBoxUnits || truth.size() != kBoxUnits)
        throw DimensionMismatch("box regression has 4 units");
    return l2_loss(pred, truth);
}

inline VectorLoss landmark_loss(std::span<const double> pred, std::span<const double> truth)
{
    if (pred.size() != kLandmarkUnits || truth.size() != kLandmarkUnits)
        throw DimensionMismatch("landmark regression has 10 units");
    return l2_loss(pred, truth);
}

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
};

// Empty optional = undefined (zero denominator), never silently 0.
struct ClassificationMetrics {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
};

inline ClassificationMetrics classification_metrics(const ConfusionCounts& c)
{
    ClassificationMetrics m;
    if (c.total() > 0)
        m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return m;
}

}  // namespace thermoscreen
