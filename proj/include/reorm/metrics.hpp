#pragma once

#include "reorm/backends.hpp"
#include "reorm/raster.hpp"

#include <optional>
#include <span>

namespace reorm {

// Identical images report the cap instead of +inf so aggregate means stay
// finite; the cap is echoed in report metadata.
inline constexpr double kPsnrCapDb = 100.0;

struct MetricSet {
    std::optional<double> dino;  // cosine similarity in [-1,1]
    std::optional<double> lpips; // distance >= 0
    double psnr = 0.0;           // decibels, capped
    double ssim = 0.0;           // [-1,1]
};

// 10*log10(255^2 / MSE), MSE over all pixels and channels.
double psnr(const Image& a, const Image& b);

// Mean SSIM over all valid 11x11 windows of the BT.601 luma plane,
// Gaussian-weighted (sigma 1.5), K1=0.01, K2=0.03, L=255.
double ssim(const Image& a, const Image& b);

// dot(e1,e2) / (|e1||e2|); rejects zero vectors and length mismatches.
double embed_cosine(std::span<const double> e1, std::span<const double> e2);

// Provider passthrough, validated nonnegative.
double pair_score(const Image& a, const Image& b, PairScorer& provider);

} // namespace reorm
