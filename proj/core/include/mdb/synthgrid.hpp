#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mdb/rng.hpp"

namespace mdb {

enum class Pool : int { Train = 0, Val = 1, Test = 2, Reserve = 3 };
inline constexpr int kPoolCount = 4;
inline constexpr std::array<Pool, kPoolCount> kAllPools{Pool::Train, Pool::Val, Pool::Test,
                                                        Pool::Reserve};

std::string_view pool_name(Pool p);
Pool parse_pool(std::string_view name);  // throws ArgumentError

/// Dense CHW float image, values in [0, 1].
struct Image {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    std::size_t size() const { return data.size(); }
};

struct Sample {
    Image pixels;
    int class_id = 0;
    int domain_id = 0;
    std::uint64_t uid = 0;
};

struct GridConfig {
    int n_classes = 10;
    int n_domains = 5;
    int image_size = 16;
    /// train / val / test / reserve samples per cell.
    std::array<int, kPoolCount> pool_sizes{1000, 250, 200, 4000};
    std::uint64_t seed = 0;
    std::size_t memory_budget_bytes = std::size_t{4} << 30;

    int pool_size(Pool p) const { return pool_sizes[static_cast<int>(p)]; }
    void validate() const;  // throws ArgumentError
};

/// Immutable class x domain grid of sample pools. Synthetic grids have
/// uniform pool sizes; ingested (manifest) grids may be ragged.
class DatasetGrid {
public:
    using CellPools = std::array<std::vector<Sample>, kPoolCount>;

    DatasetGrid(int n_classes, int n_domains, std::vector<CellPools> cells,
                std::optional<GridConfig> synthetic = std::nullopt);

    int n_classes() const { return n_classes_; }
    int n_domains() const { return n_domains_; }
    const std::optional<GridConfig>& synthetic_config() const { return synthetic_; }

    const std::vector<Sample>& pool(int class_id, int domain_id, Pool p) const;
    std::size_t pool_size(int class_id, int domain_id, Pool p) const {
        return pool(class_id, domain_id, p).size();
    }
    std::size_t total(Pool p) const;

    /// nullptr if the uid is not part of the grid.
    const Sample* find(std::uint64_t uid) const;
    /// Pool holding the uid; throws ArgumentError if unknown.
    Pool pool_of(std::uint64_t uid) const;

private:
    struct Location {
        int cell;
        Pool pool;
        std::size_t index;
    };

    int n_classes_;
    int n_domains_;
    std::vector<CellPools> cells_;
    std::optional<GridConfig> synthetic_;
    std::unordered_map<std::uint64_t, Location> index_;
};

// ---- Glyph templates ------------------------------------------------------

inline constexpr int kTemplateSize = 12;
inline constexpr int kTemplateCount = 10;

/// Binary 12x12 glyph template for a class (row-major, 1 = foreground).
std::span<const std::uint8_t, kTemplateSize * kTemplateSize> glyph_template(int class_id);

// ---- Rendering ------------------------------------------------------------

/// Per-sample glyph placement, drawn first from the render stream.
struct Jitter {
    int dx = 0;            // pixels, [-2, 2]
    int dy = 0;            // pixels, [-2, 2]
    int rotation_deg = 0;  // [-15, 15]
};

struct RenderedSample {
    Sample sample;
    std::vector<std::uint8_t> foreground;  // H*W mask
};

std::uint64_t sample_uid(std::uint64_t seed, int class_id, int domain_id, Pool pool,
                         std::size_t index) noexcept;
std::uint64_t render_stream(std::uint64_t seed, int class_id, int domain_id, Pool pool,
                            std::size_t index) noexcept;

/// Draws the glyph of class_id with per-sample jitter over the nuisance
/// background of domain_id. Jitter is drawn before background, so the same
/// stream with a different domain yields the same foreground mask.
RenderedSample render_with_mask(int class_id, int domain_id, SplitMix64& stream,
                                const GridConfig& config);
Sample render_sample(int class_id, int domain_id, SplitMix64& stream, const GridConfig& config);

/// Rasterizes the jittered glyph of a class (no background).
std::vector<std::uint8_t> glyph_mask(int class_id, const Jitter& jitter, int image_size);

DatasetGrid build_grid(const GridConfig& config);

/// Digest over every test-pool pixel, label and uid.
std::uint64_t test_pool_digest(const DatasetGrid& grid);

// ---- Manifest ingestion / export -------------------------------------------

/// Reads `path,class_id,domain_id,pool` CSV; paths resolve relative to the
/// manifest's directory. Throws LoadError naming the offending row or path.
DatasetGrid load_manifest(const std::filesystem::path& manifest);

/// Writes one PNG per sample under `dir` plus `dir/manifest.csv`.
/// Returns the manifest path.
std::filesystem::path save_manifest(const DatasetGrid& grid, const std::filesystem::path& dir);

// ---- Preprocessing --------------------------------------------------------

enum class PreprocessMode { Train, Eval };

struct PreprocessSpec {
    int target_size = 16;
    bool center_crop = false;
    double random_translate_max = 0.0;  // fraction of size, [0, 0.5]
    std::uint64_t augment_seed = 0;

    void validate() const;  // throws ArgumentError
};

/// Bilinear resize with half-pixel centers (edge-clamped).
Image resize_bilinear(const Image& in, int out_h, int out_w);
Image center_crop_square(const Image& in);
/// Shifts content right/down by (dx, dy) pixels, zero-filling the gap.
Image translate(const Image& in, int dx, int dy);

/// Translation offset in pixels for u in [0,1]: floor(u * max * size).
int translation_offset(double u, double translate_max, int size);

/// Crop (optional), resize to target, and in train mode a random
/// non-negative translation. `draw` distinguishes repeated augmentations of
/// the same sample (e.g. the epoch index).
Sample preprocess(const Sample& sample, const PreprocessSpec& spec, PreprocessMode mode,
                  std::uint64_t draw = 0);

}  // namespace mdb
