#pragma once

// Dataset generation and loading: IDX files, the shapes8 synthetic task, a
// synthetic digit task, domain transforms, and seeded batch iteration.

#include <cstdint>
#include <string>
#include <vector>

#include "dagan/rng.hpp"
#include "dagan/tensor.hpp"

namespace dagan {

struct Dataset {
    int n = 0, channels = 0, h = 0, w = 0;
    int classes = 0;
    std::vector<float> pixels;  // [n, channels, h, w], every value in [-1, 1]
    std::vector<int> labels;    // one per image, < classes

    std::size_t image_size() const { return (std::size_t)channels * h * w; }
    const float* image(int i) const { return pixels.data() + (std::size_t)i * image_size(); }
};

// ---------------------------------------------------------------------------
// IDX binary format. Images: magic 0x00000803 (count, rows, cols; grayscale)
// or 0x00000804 (count, channels, rows, cols); labels: magic 0x00000801.
// Header words are 4-byte big-endian; pixel bytes decode as b/255 * 2 - 1.
// ---------------------------------------------------------------------------

Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path);

// ---------------------------------------------------------------------------
// shapes8: 8 modes on a ring, one glyph per image; squares in the source
// domain, disks in the target domain
// ---------------------------------------------------------------------------

struct Shapes8Spec {
    int resolution = 16;
    double ring_radius = 5.0;
    double glyph_half = 0.7;    // half extent of the glyph core, px
    double sigma_pos = 0.05;    // center jitter stddev (clamped at 3 sigma)
    double sigma_color = 0.08;  // per-sample color jitter
    enum class Glyph { square, disk };
    Glyph glyph = Glyph::square;

    // reject specs whose mode footprints (glyph + AA halo + jitter) can touch
    void validate() const;
};

Dataset gen_shapes8(const Shapes8Spec& spec, int n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// digits: synthetic 10-class glyph dataset (5x7 font rendered with jitter);
// stands in for handwritten-digit data, same shapes and value range
// ---------------------------------------------------------------------------

Dataset gen_digits(int resolution, int n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// domain transforms (labels preserved)
// ---------------------------------------------------------------------------

enum class Transform { rotate90, invert, colorize };

Transform transform_from_name(const std::string& name);
const char* transform_name(Transform t);

/// rotate90: square images, 90 degrees clockwise; invert: x -> -x;
/// colorize: YIQ hue rotation by `hue_degrees` (1-channel input is expanded
/// to 3 channels first; luminance is preserved, output clamped to [-1,1])
Dataset transform_domain(const Dataset& d, Transform t, double hue_degrees = 120.0);

// ---------------------------------------------------------------------------
// seeded epoch iteration: permutation per epoch, final short batch dropped
// ---------------------------------------------------------------------------

class BatchIter {
  public:
    BatchIter(int n, int batch_size, std::uint64_t seed);

    /// indices of the next batch (always exactly batch_size of them)
    std::vector<int> next();

    // checkpointable position
    std::uint64_t epoch_rng_state() const { return epoch_state_; }
    int cursor() const { return cursor_; }
    std::uint64_t epoch() const { return epoch_; }
    void restore(std::uint64_t epoch_rng_state, int cursor, std::uint64_t epoch);

  private:
    void reshuffle();
    int n_, batch_;
    Rng rng_;
    std::uint64_t epoch_state_ = 0;  // rng state at the top of the current epoch
    std::uint64_t epoch_ = 0;
    int cursor_ = 0;
    std::vector<int> perm_;
    bool started_ = false;
};

/// batch tensors for the trainer: images [B,C,H,W] and labels [B]
TensorPtr<float> gather_images(const Dataset& d, const std::vector<int>& idx);
TensorPtr<float> gather_labels(const Dataset& d, const std::vector<int>& idx);

}  // namespace dagan
