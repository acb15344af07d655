#pragma once

#include <string>
#include <vector>

#include "dpmn/priors.hpp"
#include "dpmn/tensor.hpp"

// Deterministic synthetic LR/HR text-image pairs: seeded rendering, tiered
// Gaussian-blur degradation, 8-bit quantize-once storage as binary PPM plus a
// CSV manifest. Regenerating from (label, seed, tier) is bitwise reproducible.

namespace dpmn::synth {

enum class Tier { easy, medium, hard };

const char* tier_name(Tier t);
Tier tier_from_name(const std::string& s);

struct DegradationConfig {
    double blur_sigma_easy = 0.5;
    double blur_sigma_medium = 1.0;
    double blur_sigma_hard = 1.5;
    double noise_sigma = 0.01;

    double blur_for(Tier t) const {
        switch (t) {
            case Tier::easy: return blur_sigma_easy;
            case Tier::medium: return blur_sigma_medium;
            default: return blur_sigma_hard;
        }
    }
};

struct SamplePair {
    std::string id;
    std::string label;
    Tensor<double> hr;  // 32x128x3
    Tensor<double> lr;  // 16x64x3
    Tier tier = Tier::easy;
    u64 seed = 0;
};

// Seeded two-level render: background luma in [0.1,0.4], foreground luma in
// [0.6,0.95], small chroma jitter, glyphs in the fixed 8-cell layout.
Tensor<double> render_hr(const std::string& label, u64 style_seed,
                         const priors::GlyphAtlas& atlas = priors::GlyphAtlas::builtin());

// Gaussian blur (kernel truncated at 2*sigma, reflective padding), 2x box
// downsample, additive seeded Gaussian noise, clipped to [0,1].
Tensor<double> degrade_to_lr(const Tensor<double>& hr, const DegradationConfig& cfg, Tier tier,
                             u64 noise_seed);

// Full (label, seed, tier) -> pixels pipeline with quantize-once semantics:
// both images round-trip the 8-bit on-disk form.
SamplePair regenerate_sample(const std::string& id, const std::string& label, u64 seed, Tier tier,
                             const DegradationConfig& cfg = {});

struct ManifestRow {
    std::string id, label, tier, split;
    u64 seed = 0;
    std::string lr_path, hr_path;  // relative to the dataset dir
};

struct DatasetManifest {
    std::string dir;
    std::vector<ManifestRow> rows;

    std::vector<ManifestRow> split(const std::string& name) const;
};

DatasetManifest build_dataset(i64 n_train, i64 n_test_per_tier, u64 master_seed,
                              const std::string& out_dir, bool force = false,
                              const DegradationConfig& cfg = {});

DatasetManifest load_dataset(const std::string& dir);

SamplePair load_sample(const DatasetManifest& m, const ManifestRow& row);

}  // namespace dpmn::synth
