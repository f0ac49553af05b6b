#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "acr/buffer.hpp"

namespace acr {

enum class InputKind { Vector, Image };

struct Task {
    std::size_t id = 0;
    std::vector<std::size_t> classes;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

// Ordered class-incremental task sequence with pairwise disjoint class
// sets and per-class train/test splits.
struct TaskStream {
    InputKind kind = InputKind::Vector;
    std::size_t dim = 0;
    std::size_t side = 0;  // image edge length, 0 for vector streams
    std::vector<Task> tasks;

    // Class id lists for the first `upto` tasks, in arrival order.
    std::vector<std::vector<std::size_t>> classes_per_task(std::size_t upto) const;
    std::size_t total_classes() const;
};

// Gaussian-blob classes at pairwise distance controlled by `margin`
// (margin 0 puts every class on the same blob). Split 80/20 per class.
TaskStream make_synthetic_stream(std::size_t tasks, std::size_t classes_per_task,
                                 std::size_t samples_per_class, std::size_t dim,
                                 std::uint32_t seed, double margin = 3.0);

// Procedural grayscale glyph classes (disks, rings, bars, crosses) with
// per-sample position/size/intensity jitter. jitter 0 makes every sample
// of a class identical; outlier_fraction of samples get several times the
// jitter plus heavy pixel noise.
TaskStream make_image_stream(std::size_t tasks, std::size_t classes_per_task,
                             std::size_t side, std::uint32_t seed,
                             std::size_t samples_per_class = 250, double jitter = 1.0,
                             double outlier_fraction = 0.08);

// Deterministic pieces of the train-time augmentation: pad-by-one with
// mirrored borders, shift by (dx, dy) in {-1,0,1}, crop back; horizontal
// mirror.
std::vector<double> shift_crop(const std::vector<double>& img, std::size_t side, int dx,
                               int dy);
std::vector<double> hflip_image(const std::vector<double>& img, std::size_t side);

// Per-sample independent augmentation. Images: random shift_crop plus a
// coin-flip mirror. Vectors: additive N(0, 0.05) noise.
std::vector<Sample> augment(const std::vector<Sample>& batch, std::mt19937& rng,
                            const TaskStream& stream);

enum class CorruptionKind { Gaussian, Shot, Impulse, Defocus, Pixelate };

std::string corruption_name(CorruptionKind kind);
CorruptionKind corruption_from_name(const std::string& name);

// Five-point severity ladders; tuned for small grayscale grids and kept
// as configuration rather than constants.
struct SeverityTable {
    std::array<double, 5> gaussian_sigma{0.04, 0.06, 0.08, 0.09, 0.10};
    std::array<double, 5> shot_photons{60.0, 25.0, 12.0, 5.0, 3.0};
    std::array<double, 5> impulse_fraction{0.03, 0.06, 0.09, 0.17, 0.27};
    std::array<int, 5> defocus_radius{1, 1, 2, 2, 3};
    std::array<int, 5> pixelate_factor{2, 2, 3, 3, 5};
};

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::Gaussian;
    int severity = 1;  // 0 means identity
};

// Parameter-level corruption primitives; outputs clamped to [0,1].
std::vector<double> gaussian_noise(const std::vector<double>& img, double sigma,
                                   std::mt19937& rng);
std::vector<double> shot_noise(const std::vector<double>& img, double photons,
                               std::mt19937& rng);
std::vector<double> impulse_noise(const std::vector<double>& img, double fraction,
                                  std::mt19937& rng);
std::vector<double> defocus_blur(const std::vector<double>& img, std::size_t side,
                                 int radius);
std::vector<double> pixelate(const std::vector<double>& img, std::size_t side,
                             int factor);

// Applies the severity-mapped corruption to every sample of a test set.
std::vector<Sample> corrupt(const std::vector<Sample>& test_set,
                            const CorruptionSpec& spec, std::size_t side,
                            std::mt19937& rng, const SeverityTable& table = {});

// Binary sample cache, one file per task per split. Layout: magic
// "ACds", u32 version, u64 dim, u64 side, u64 count; then count*dim
// doubles row-major; then ids, labels, task ids as u64 arrays.
void write_samples(const std::string& path, const std::vector<Sample>& samples,
                   std::size_t dim, std::size_t side);
std::vector<Sample> read_samples(const std::string& path, std::size_t* dim_out,
                                 std::size_t* side_out);

// Whole-stream cache: task<k>_train.bin / task<k>_test.bin plus a JSON
// manifest under `dir`.
void cache_stream(const TaskStream& stream, const std::string& dir);
TaskStream load_stream_cache(const std::string& dir);

}  // namespace acr
