#include "mdb/synthgrid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mdb/digest.hpp"
#include "mdb/error.hpp"

namespace mdb {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Polynomial sin/cos for |x| <= 0.3 rad. Basic IEEE arithmetic only, so the
// rendered masks do not depend on the platform's libm.
double poly_sin(double x) {
    const double x2 = x * x;
    return x * (1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0))));
}

double poly_cos(double x) {
    const double x2 = x * x;
    return 1.0 - x2 / 2.0 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0 * (1.0 - x2 / 56.0)));
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Per-domain channel gains; domains past the table wrap around.
constexpr double kTints[8][3] = {
    {1.00, 1.00, 1.00}, {1.00, 0.60, 0.40}, {0.45, 0.85, 1.00}, {0.70, 1.00, 0.50},
    {1.00, 0.80, 1.00}, {0.85, 0.85, 0.55}, {0.55, 0.65, 1.00}, {1.00, 0.50, 0.75},
};

enum class Family { UniformNoise, Stripes, Checkerboard, ValueNoise, Inverted };

Family family_of(int domain_id) { return static_cast<Family>(domain_id % 5); }

constexpr double kBackgroundHigh = 0.35;
constexpr double kGlyphOffset = 0.5;  // contrast of glyph over background

std::vector<double> render_background(Family family, int size, SplitMix64& rng) {
    std::vector<double> bg(static_cast<std::size_t>(size) * size);
    switch (family) {
        case Family::UniformNoise:
            for (double& v : bg) v = kBackgroundHigh * rng.uniform();
            break;
        case Family::Stripes: {
            const int band = std::max(1, size / 8);
            const int phase = static_cast<int>(rng.below(2 * band));
            for (int y = 0; y < size; ++y) {
                const bool bright = ((y + phase) / band) % 2 == 1;
                for (int x = 0; x < size; ++x) bg[y * size + x] = bright ? 0.32 : 0.04;
            }
            break;
        }
        case Family::Checkerboard: {
            const int cell = std::max(1, size / 8);
            const int ox = static_cast<int>(rng.below(2 * cell));
            const int oy = static_cast<int>(rng.below(2 * cell));
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const bool bright = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 1;
                    bg[y * size + x] = bright ? 0.32 : 0.04;
                }
            }
            break;
        }
        case Family::ValueNoise: {
            constexpr int kLattice = 4;
            double lattice[kLattice + 1][kLattice + 1];
            for (auto& row : lattice)
                for (double& v : row) v = kBackgroundHigh * rng.uniform();
            for (int y = 0; y < size; ++y) {
                const double fy = (y + 0.5) * kLattice / size;
                const int iy = std::min(static_cast<int>(fy), kLattice - 1);
                double ty = fy - iy;
                ty = ty * ty * (3.0 - 2.0 * ty);
                for (int x = 0; x < size; ++x) {
                    const double fx = (x + 0.5) * kLattice / size;
                    const int ix = std::min(static_cast<int>(fx), kLattice - 1);
                    double tx = fx - ix;
                    tx = tx * tx * (3.0 - 2.0 * tx);
                    const double top = lattice[iy][ix] * (1 - tx) + lattice[iy][ix + 1] * tx;
                    const double bot = lattice[iy + 1][ix] * (1 - tx) + lattice[iy + 1][ix + 1] * tx;
                    bg[y * size + x] = top * (1 - ty) + bot * ty;
                }
            }
            break;
        }
        case Family::Inverted:
            for (double& v : bg) v = std::clamp(0.85 + 0.04 * rng.normal_approx(), 0.7, 1.0);
            break;
    }
    return bg;
}

void check_ids(int class_id, int domain_id, const GridConfig& config) {
    if (class_id < 0 || class_id >= config.n_classes) {
        throw ArgumentError("class_id " + std::to_string(class_id) + " outside [0, " +
                            std::to_string(config.n_classes) + ")");
    }
    if (domain_id < 0 || domain_id >= config.n_domains) {
        throw ArgumentError("domain_id " + std::to_string(domain_id) + " outside [0, " +
                            std::to_string(config.n_domains) + ")");
    }
}

}  // namespace

std::string_view pool_name(Pool p) {
    switch (p) {
        case Pool::Train: return "train";
        case Pool::Val: return "val";
        case Pool::Test: return "test";
        case Pool::Reserve: return "reserve";
    }
    return "?";
}

Pool parse_pool(std::string_view name) {
    for (Pool p : kAllPools) {
        if (pool_name(p) == name) return p;
    }
    throw ArgumentError("unknown pool '" + std::string(name) + "'");
}

void GridConfig::validate() const {
    if (n_classes < 2) throw ArgumentError("n_classes must be >= 2");
    if (n_domains < 2) throw ArgumentError("n_domains must be >= 2");
    if (n_classes > kTemplateCount) {
        throw ArgumentError("synthetic grids support at most " + std::to_string(kTemplateCount) +
                            " classes");
    }
    if (image_size < 4) throw ArgumentError("image_size must be >= 4");
    for (int s : pool_sizes) {
        if (s < 0) throw ArgumentError("pool sizes must be >= 0");
    }
}

DatasetGrid::DatasetGrid(int n_classes, int n_domains, std::vector<CellPools> cells,
                         std::optional<GridConfig> synthetic)
    : n_classes_(n_classes), n_domains_(n_domains), cells_(std::move(cells)),
      synthetic_(std::move(synthetic)) {
    if (n_classes_ < 1 || n_domains_ < 1) throw ArgumentError("grid dimensions must be positive");
    if (cells_.size() != static_cast<std::size_t>(n_classes_) * n_domains_) {
        throw ArgumentError("grid cell count does not match dimensions");
    }
    for (int cell = 0; cell < static_cast<int>(cells_.size()); ++cell) {
        for (Pool p : kAllPools) {
            const auto& pool = cells_[cell][static_cast<int>(p)];
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (!index_.emplace(pool[i].uid, Location{cell, p, i}).second) {
                    throw ArgumentError("duplicate sample uid " + to_hex(pool[i].uid));
                }
            }
        }
    }
}

const std::vector<Sample>& DatasetGrid::pool(int class_id, int domain_id, Pool p) const {
    if (class_id < 0 || class_id >= n_classes_ || domain_id < 0 || domain_id >= n_domains_) {
        throw ArgumentError("cell (" + std::to_string(class_id) + "," + std::to_string(domain_id) +
                            ") outside grid");
    }
    return cells_[static_cast<std::size_t>(class_id) * n_domains_ + domain_id][static_cast<int>(p)];
}

std::size_t DatasetGrid::total(Pool p) const {
    std::size_t n = 0;
    for (const auto& cell : cells_) n += cell[static_cast<int>(p)].size();
    return n;
}

const Sample* DatasetGrid::find(std::uint64_t uid) const {
    auto it = index_.find(uid);
    if (it == index_.end()) return nullptr;
    const Location& loc = it->second;
    return &cells_[loc.cell][static_cast<int>(loc.pool)][loc.index];
}

Pool DatasetGrid::pool_of(std::uint64_t uid) const {
    auto it = index_.find(uid);
    if (it == index_.end()) throw ArgumentError("unknown uid " + to_hex(uid));
    return it->second.pool;
}

std::uint64_t sample_uid(std::uint64_t seed, int class_id, int domain_id, Pool pool,
                         std::size_t index) noexcept {
    return stream_key(seed, {tag(StreamTag::Uid), static_cast<std::uint64_t>(class_id),
                             static_cast<std::uint64_t>(domain_id),
                             static_cast<std::uint64_t>(pool), index});
}

std::uint64_t render_stream(std::uint64_t seed, int class_id, int domain_id, Pool pool,
                            std::size_t index) noexcept {
    return stream_key(seed, {tag(StreamTag::Render), static_cast<std::uint64_t>(class_id),
                             static_cast<std::uint64_t>(domain_id),
                             static_cast<std::uint64_t>(pool), index});
}

std::vector<std::uint8_t> glyph_mask(int class_id, const Jitter& jitter, int image_size) {
    const auto bitmap = glyph_template(class_id);
    const double box = 0.75 * image_size;
    const double theta = jitter.rotation_deg * kPi / 180.0;
    const double s = poly_sin(theta);
    const double c = poly_cos(theta);
    const double cx = image_size / 2.0 + jitter.dx;
    const double cy = image_size / 2.0 + jitter.dy;

    std::vector<std::uint8_t> mask(static_cast<std::size_t>(image_size) * image_size, 0);
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            const double px = x + 0.5 - cx;
            const double py = y + 0.5 - cy;
            // Inverse rotation maps the output pixel back into template space.
            const double u = c * px + s * py;
            const double v = -s * px + c * py;
            const double tu = std::floor((u / box + 0.5) * kTemplateSize);
            const double tv = std::floor((v / box + 0.5) * kTemplateSize);
            if (tu < 0 || tv < 0 || tu >= kTemplateSize || tv >= kTemplateSize) continue;
            mask[y * image_size + x] =
                bitmap[static_cast<int>(tv) * kTemplateSize + static_cast<int>(tu)];
        }
    }
    return mask;
}

RenderedSample render_with_mask(int class_id, int domain_id, SplitMix64& stream,
                                const GridConfig& config) {
    check_ids(class_id, domain_id, config);
    const int size = config.image_size;

    Jitter jitter;
    jitter.dx = static_cast<int>(stream.range(-2, 2));
    jitter.dy = static_cast<int>(stream.range(-2, 2));
    jitter.rotation_deg = static_cast<int>(stream.range(-15, 15));
    std::vector<std::uint8_t> mask = glyph_mask(class_id, jitter, size);

    const Family family = family_of(domain_id);
    const std::vector<double> bg = render_background(family, size, stream);
    const double sign = family == Family::Inverted ? -1.0 : 1.0;
    const double* tint = kTints[domain_id % 8];

    RenderedSample out;
    out.sample.class_id = class_id;
    out.sample.domain_id = domain_id;
    out.sample.pixels = Image(3, size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * size + x;
            double gray = bg[i];
            if (mask[i]) gray += sign * kGlyphOffset;
            gray = std::clamp(gray, 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) out.sample.pixels.at(ch, y, x) = clamp01(gray * tint[ch]);
        }
    }
    out.foreground = std::move(mask);
    return out;
}

Sample render_sample(int class_id, int domain_id, SplitMix64& stream, const GridConfig& config) {
    return render_with_mask(class_id, domain_id, stream, config).sample;
}

DatasetGrid build_grid(const GridConfig& config) {
    config.validate();
    const std::size_t per_sample =
        sizeof(Sample) + sizeof(float) * 3 * static_cast<std::size_t>(config.image_size) * config.image_size;
    std::size_t used = 0;
    for (int c = 0; c < config.n_classes; ++c) {
        for (int d = 0; d < config.n_domains; ++d) {
            for (Pool p : kAllPools) {
                used += per_sample * static_cast<std::size_t>(config.pool_size(p));
                if (used > config.memory_budget_bytes) {
                    throw ResourceError("grid exceeds memory budget of " +
                                        std::to_string(config.memory_budget_bytes) +
                                        " bytes at cell (" + std::to_string(c) + "," +
                                        std::to_string(d) + ") pool " + std::string(pool_name(p)));
                }
            }
        }
    }

    std::vector<DatasetGrid::CellPools> cells(static_cast<std::size_t>(config.n_classes) *
                                              config.n_domains);
    for (int c = 0; c < config.n_classes; ++c) {
        for (int d = 0; d < config.n_domains; ++d) {
            auto& cell = cells[static_cast<std::size_t>(c) * config.n_domains + d];
            for (Pool p : kAllPools) {
                auto& pool = cell[static_cast<int>(p)];
                const int n = config.pool_size(p);
                pool.reserve(n);
                for (int i = 0; i < n; ++i) {
                    SplitMix64 stream(render_stream(config.seed, c, d, p, i));
                    Sample s = render_sample(c, d, stream, config);
                    s.uid = sample_uid(config.seed, c, d, p, i);
                    pool.push_back(std::move(s));
                }
            }
        }
    }
    return DatasetGrid(config.n_classes, config.n_domains, std::move(cells), config);
}

std::uint64_t test_pool_digest(const DatasetGrid& grid) {
    Fnv1a h;
    for (int c = 0; c < grid.n_classes(); ++c) {
        for (int d = 0; d < grid.n_domains(); ++d) {
            for (const Sample& s : grid.pool(c, d, Pool::Test)) {
                h.update_u64(s.uid);
                h.update_u64(static_cast<std::uint64_t>(s.class_id));
                h.update_u64(static_cast<std::uint64_t>(s.domain_id));
                for (float v : s.pixels.data) h.update_f32(v);
            }
        }
    }
    return h.value();
}

}  // namespace mdb
