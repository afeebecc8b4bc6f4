#pragma once

#include "gaf/field.hpp"
#include "gaf/image.hpp"
#include "gaf/renderer.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace gaf {

struct View {
    Camera camera;
    Image image;
};

/// Observations at t (current) and t + interval (future). Either list may
/// be empty, not both.
struct SupervisionSet {
    std::vector<View> current;
    std::vector<View> future;

    void validate() const;
};

struct LearningRates {
    double mean = 1.6e-3;
    double displacement = 1.6e-3;
    double color = 2.5e-3;
    double opacity = 5e-2;
    double rotation = 1e-3;
    double scale = 5e-3;

    double of(ParamGroup g) const;
};

struct FitConfig {
    int iterations = 2000;
    LearningRates lr;
    double ssim_weight = 0.2;
    std::uint64_t seed = 0;
    RenderConfig render;

    void validate() const;
};

struct PhotometricLoss {
    double loss = 0.0;
    Image gradient;  // d loss / d rendered
};

/// (1 - w) * MSE + w * (1 - SSIM), with its analytic gradient.
PhotometricLoss photometric_loss(const Image& rendered, const Image& target, double ssim_weight);

struct LossTerms {
    double total = 0.0;
    double current = 0.0;
    double future = 0.0;
};

struct LossEvaluation {
    LossTerms terms;
    FieldDelta delta;
};

/// Sum of photometric losses over current views (rendered from the field)
/// and future views (rendered from advance(field, 1)). Displacement
/// gradients come from the future terms only.
LossEvaluation total_loss(const GaussianField& field, const SupervisionSet& sup, const FitConfig& cfg);

struct AdamState {
    std::vector<PointParams> first;
    std::vector<PointParams> second;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : first(n, PointParams{}), second(n, PointParams{}) {}
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;
inline constexpr double kMaxOpacityLogit = 12.0;

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One bias-corrected Adam update in place, followed by the parameter-space
/// projections: colors to [0, 1], opacity logits to +-kMaxOpacityLogit, log
/// scales above the floor, quaternions renormalized. Labels never change.
void adam_step(GaussianField& field, const FieldDelta& delta, AdamState& state, const FitConfig& cfg);

struct LossRecord {
    int iteration = 0;
    LossTerms terms;
};

class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, std::vector<LossRecord> history)
        : NumericalError(what), history_(std::move(history))
    {
    }
    const std::vector<LossRecord>& history() const { return history_; }

private:
    std::vector<LossRecord> history_;
};

struct FitResult {
    GaussianField field;
    std::vector<LossRecord> history;
};

using FitObserver = std::function<void(const LossRecord&)>;

/// Runs cfg.iterations Adam steps on total_loss. Throws DivergenceError when
/// the loss becomes non-finite or exceeds 1e6.
FitResult fit(const GaussianField& initial, const SupervisionSet& sup, const FitConfig& cfg,
              const FitObserver& observer = {});

/// Initialization for fitting from known centers: zero displacement, gray
/// color, opacity logit 0, identity rotation, isotropic scale of twice the
/// mean nearest-neighbor distance.
GaussianField initialize_field(const std::vector<Vec3>& centers, const std::vector<std::uint8_t>& labels);

}  // namespace gaf
