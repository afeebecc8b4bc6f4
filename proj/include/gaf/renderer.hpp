#pragma once

#include "gaf/field.hpp"
#include "gaf/geometry.hpp"
#include "gaf/image.hpp"

#include <cstdint>
#include <vector>

namespace gaf {

struct RenderConfig {
    Vec3 background = Vec3::Zero();
    double alpha_ceiling = 0.999;
    double alpha_cutoff = 1.0 / 255.0;
    /// Gaussians are evaluated only where the Mahalanobis distance is at most
    /// this many standard deviations.
    double support_radius = 3.0;

    void validate() const;
};

struct RenderOutput {
    Image image;
    std::vector<double> transmittance;  // final T per pixel, row-major
};

/// Front-to-back alpha compositing of the field, sorted by camera depth with
/// ties broken by field index.
RenderOutput render(const GaussianField& field, const Camera& cam, const RenderConfig& cfg = {});

/// Brute-force evaluation of the same contract: every Gaussian is tested at
/// every pixel and each pixel sorts its own contributors.
RenderOutput render_reference(const GaussianField& field, const Camera& cam, const RenderConfig& cfg = {});

/// Gradient of sum(image_gradient * render(field)) with respect to every
/// point's parameters (displacement slots are zero; see chain_through_advance).
FieldDelta render_backward(const GaussianField& field, const Camera& cam, const RenderConfig& cfg,
                           const Image& image_gradient);

/// Maps a gradient taken with respect to advance(F, 1) onto F: the mean
/// gradient is copied onto both the mean and displacement slots.
FieldDelta chain_through_advance(const FieldDelta& advanced);

/// Per-pixel blend lists (Gaussian index in blend order plus whether the
/// alpha ceiling was active). Freezing these gates makes the rendered image
/// a smooth function of the parameters, which is what finite-difference
/// checks need.
struct Visibility {
    struct Entry {
        std::uint32_t index;
        bool clamped;
    };
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> offsets;  // width * height + 1
    std::vector<Entry> entries;
};

Visibility capture_visibility(const GaussianField& field, const Camera& cam, const RenderConfig& cfg = {});
RenderOutput render_frozen(const GaussianField& field, const Camera& cam, const RenderConfig& cfg,
                           const Visibility& gates);

}  // namespace gaf
