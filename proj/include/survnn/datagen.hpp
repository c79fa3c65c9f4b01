#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "survnn/rng.hpp"
#include "survnn/survival.hpp"

namespace survnn {

// Fixed-shape image collection; one column per image, channel-major
// (c, row, col) order, pixel values in [0, 1] on the k/255 grid.
struct ImageSet {
    int h = 0, w = 0, c = 1;
    Eigen::MatrixXf pixels;     // (c*h*w) x n
    Eigen::VectorXi labels;     // size n or 0

    int count() const { return static_cast<int>(pixels.cols()); }
    int dim() const { return c * h * w; }
};

enum class CensorMode { None, MedianHalf, Nodule };

std::string to_string(CensorMode m);
CensorMode censor_mode_from_string(const std::string& s);

struct GenConfig {
    std::uint64_t seed = 1;

    // Sim A/B: per-class log relative hazards.
    double phi0 = 0.0;
    double phi1 = 3.0;
    CensorMode censor_mode = CensorMode::None;

    // Nodule-CIFAR geometry.
    double cancer_prevalence = 0.5;
    double cancer_event_rate = 0.5;
    int dot_count = 8;
    int dot_min = 1, dot_max = 4;
    int patch_count = 2;
    int censored_patch_min = 5, censored_patch_max = 7;
    int event_patch_min = 5, event_patch_max = 8;
    // Non-cancer records additionally get this many larger benign dots, sized
    // from [benign_big_min, benign_big_max]. They keep the total square count
    // equal across groups and overlap the malignant patch range, so detection
    // rests on nodule size rather than on counting squares.
    int benign_big_dot_count = 2;
    int benign_big_min = 4, benign_big_max = 6;
    double alpha = 1.3;          // log relative hazard per pixel, cancer records
    double benign_alpha = 1.2;   // same, non-cancer records (benign dots only)
    double dot_white_prob = 1.0;  // dots painted white with this probability, else black

    void validate() const;
};

struct Dataset {
    SurvivalData surv;
    ImageSet images;
    Eigen::VectorXd nodule_size;   // generating size per record; empty when unused
};

// Exponential event time with rate exp(phi), inverse-CDF draw.
double sample_event_time(double phi, Rng& rng);

// Simulations A/B: one record per base image; class label drives the hazard.
// MedianHalf censoring relabels half of each class's strictly-above-median
// times as censored, times unchanged.
Dataset gen_sim_ab(const ImageSet& base, const GenConfig& cfg, std::uint64_t seed);

// Nodule-CIFAR: benign dots on every image, two white patches on cancer
// images, hazard proportional to the largest nodule size.
Dataset gen_nodule_cifar(const ImageSet& base, const GenConfig& cfg, std::uint64_t seed);

// IDX (MNIST) format.
ImageSet load_idx_images(const std::string& path);
Eigen::VectorXi load_idx_labels(const std::string& path);

// CIFAR-10 binary batches (3073-byte records).
ImageSet load_cifar_binary(const std::string& path);

enum class SynthKind { TwoClassShapes, Noise32 };

// Offline stand-ins: 28x28x1 hollow circles vs vertical bars, or 32x32x3
// uniform-noise backgrounds.
ImageSet synth_base_images(SynthKind kind, int n, std::uint64_t seed);

void save_dataset(const std::string& dir, const Dataset& ds, const GenConfig& cfg);
Dataset load_dataset(const std::string& dir);

}  // namespace survnn
