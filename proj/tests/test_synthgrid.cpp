#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "mdb/error.hpp"
#include "mdb/synthgrid.hpp"

using namespace mdb;
namespace fs = std::filesystem;

namespace {

GridConfig small_config() {
    GridConfig g;
    g.n_classes = 4;
    g.n_domains = 5;
    g.pool_sizes = {6, 3, 2, 4};
    g.seed = 11;
    return g;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mdb_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Glyphs, TemplatesPairwiseDifferByAQuarterOfForeground) {
    // Independent count over the embedded bitmaps: |A xor B| / max(|A|, |B|).
    for (int a = 0; a < kTemplateCount; ++a) {
        for (int b = a + 1; b < kTemplateCount; ++b) {
            const auto ta = glyph_template(a);
            const auto tb = glyph_template(b);
            int diff = 0, fa = 0, fb = 0;
            for (std::size_t i = 0; i < ta.size(); ++i) {
                diff += ta[i] != tb[i];
                fa += ta[i];
                fb += tb[i];
            }
            EXPECT_GE(diff, 0.25 * std::max(fa, fb)) << "classes " << a << " and " << b;
        }
    }
}

TEST(Glyphs, ClassZeroVersusOneMeanAbsoluteDifference) {
    const auto t0 = glyph_template(0);
    const auto t1 = glyph_template(1);
    double abs_sum = 0.0;
    int area = 0;
    for (std::size_t i = 0; i < t0.size(); ++i) {
        abs_sum += std::abs(static_cast<double>(t0[i]) - t1[i]);
        area += t0[i];
    }
    EXPECT_GE(abs_sum, 0.25 * area);
}

TEST(Glyphs, OutOfRangeClassThrows) {
    EXPECT_THROW(glyph_template(-1), ArgumentError);
    EXPECT_THROW(glyph_template(kTemplateCount), ArgumentError);
}

TEST(Render, SameStreamTwiceIsIdentical) {
    const GridConfig g = small_config();
    SplitMix64 a(render_stream(g.seed, 0, 0, Pool::Train, 0));
    SplitMix64 b(render_stream(g.seed, 0, 0, Pool::Train, 0));
    EXPECT_EQ(render_sample(0, 0, a, g).pixels.data, render_sample(0, 0, b, g).pixels.data);
}

TEST(Render, DomainChangesBackgroundButNotForeground) {
    const GridConfig g = small_config();
    for (int c = 0; c < g.n_classes; ++c) {
        for (std::size_t idx = 0; idx < 5; ++idx) {
            const std::uint64_t key = render_stream(g.seed, c, 0, Pool::Train, idx);
            SplitMix64 s0(key);
            const RenderedSample r0 = render_with_mask(c, 0, s0, g);
            for (int d = 1; d < g.n_domains; ++d) {
                SplitMix64 sd(key);
                const RenderedSample rd = render_with_mask(c, d, sd, g);
                EXPECT_EQ(r0.foreground, rd.foreground) << "class " << c << " domain " << d;
                EXPECT_NE(r0.sample.pixels.data, rd.sample.pixels.data);
            }
        }
    }
}

TEST(Render, OutOfRangeIdsThrow) {
    const GridConfig g = small_config();
    SplitMix64 s(1);
    EXPECT_THROW(render_sample(g.n_classes, 0, s, g), ArgumentError);
    EXPECT_THROW(render_sample(0, -1, s, g), ArgumentError);
}

TEST(Render, GlyphHasContrastAgainstBackground) {
    const GridConfig g = small_config();
    for (int d = 0; d < g.n_domains; ++d) {
        SplitMix64 s(render_stream(g.seed, 1, d, Pool::Test, 0));
        const RenderedSample r = render_with_mask(1, d, s, g);
        double fg = 0, bg = 0;
        int nf = 0, nb = 0;
        const int n = g.image_size * g.image_size;
        for (int i = 0; i < n; ++i) {
            double v = 0;
            for (int ch = 0; ch < 3; ++ch) v += r.sample.pixels.data[ch * n + i];
            (r.foreground[i] ? fg : bg) += v / 3;
            (r.foreground[i] ? nf : nb) += 1;
        }
        ASSERT_GT(nf, 0);
        EXPECT_GT(std::abs(fg / nf - bg / nb), 0.2) << "domain " << d;
    }
}

TEST(BuildGrid, PoolSizesPixelRangeAndUids) {
    const GridConfig g = small_config();
    const DatasetGrid grid = build_grid(g);
    std::set<std::uint64_t> uids;
    for (int c = 0; c < g.n_classes; ++c)
        for (int d = 0; d < g.n_domains; ++d)
            for (Pool p : kAllPools) {
                const auto& pool = grid.pool(c, d, p);
                ASSERT_EQ(static_cast<int>(pool.size()), g.pool_size(p));
                for (std::size_t i = 0; i < pool.size(); ++i) {
                    const Sample& s = pool[i];
                    EXPECT_EQ(s.class_id, c);
                    EXPECT_EQ(s.domain_id, d);
                    EXPECT_EQ(s.uid, sample_uid(g.seed, c, d, p, i));
                    uids.insert(s.uid);
                    for (float v : s.pixels.data) {
                        ASSERT_GE(v, 0.0f);
                        ASSERT_LE(v, 1.0f);
                    }
                }
            }
    EXPECT_EQ(uids.size(), grid.total(Pool::Train) + grid.total(Pool::Val) + grid.total(Pool::Test) +
                               grid.total(Pool::Reserve));
}

TEST(BuildGrid, DeterministicBitExact) {
    const GridConfig g = small_config();
    EXPECT_EQ(test_pool_digest(build_grid(g)), test_pool_digest(build_grid(g)));
    const DatasetGrid a = build_grid(g), b = build_grid(g);
    EXPECT_EQ(a.pool(3, 4, Pool::Reserve)[3].pixels.data, b.pool(3, 4, Pool::Reserve)[3].pixels.data);
    GridConfig other = g;
    other.seed = 12;
    EXPECT_NE(test_pool_digest(build_grid(other)), test_pool_digest(a));
}

TEST(BuildGrid, MemoryBudgetOverflowNamesCell) {
    GridConfig g = small_config();
    g.memory_budget_bytes = 1000;
    try {
        build_grid(g);
        FAIL() << "expected ResourceError";
    } catch (const ResourceError& e) {
        EXPECT_NE(std::string(e.what()).find("cell"), std::string::npos) << e.what();
    }
}

TEST(BuildGrid, InvalidConfigThrows) {
    GridConfig g = small_config();
    g.n_domains = 1;
    EXPECT_THROW(build_grid(g), ArgumentError);
    g = small_config();
    g.pool_sizes[0] = -1;
    EXPECT_THROW(build_grid(g), ArgumentError);
}

TEST(Manifest, RoundTripPreservesMembership) {
    GridConfig g = small_config();
    g.n_classes = 3;
    g.n_domains = 2;
    const DatasetGrid grid = build_grid(g);
    const fs::path dir = temp_dir("roundtrip");
    const DatasetGrid back = load_manifest(save_manifest(grid, dir));
    ASSERT_EQ(back.n_classes(), 3);
    ASSERT_EQ(back.n_domains(), 2);
    for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 2; ++d)
            for (Pool p : kAllPools) {
                const auto& a = grid.pool(c, d, p);
                const auto& b = back.pool(c, d, p);
                ASSERT_EQ(a.size(), b.size());
                for (std::size_t i = 0; i < a.size(); ++i) {
                    EXPECT_EQ(b[i].class_id, c);
                    EXPECT_EQ(b[i].domain_id, d);
                    // 8-bit PNG quantization: within half a level.
                    for (std::size_t k = 0; k < a[i].pixels.data.size(); ++k)
                        ASSERT_NEAR(a[i].pixels.data[k], b[i].pixels.data[k], 0.5 / 255 + 1e-6);
                }
            }
    fs::remove_all(dir);
}

TEST(Manifest, HeaderOnlyIsNoSamples) {
    const fs::path dir = temp_dir("empty");
    std::ofstream(dir / "manifest.csv") << "path,class_id,domain_id,pool\n";
    try {
        load_manifest(dir / "manifest.csv");
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_NE(std::string(e.what()).find("no samples"), std::string::npos);
    }
    fs::remove_all(dir);
}

TEST(Manifest, OneSamplePerCell) {
    GridConfig g = small_config();
    g.n_classes = 2;
    g.n_domains = 2;
    g.pool_sizes = {1, 0, 0, 0};
    const fs::path dir = temp_dir("one");
    const DatasetGrid back = load_manifest(save_manifest(build_grid(g), dir));
    for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d)
            for (Pool p : kAllPools) EXPECT_LE(back.pool_size(c, d, p), 1u);
    fs::remove_all(dir);
}

TEST(Manifest, MissingFileNamesPath) {
    const fs::path dir = temp_dir("missing");
    std::ofstream(dir / "manifest.csv") << "path,class_id,domain_id,pool\nimages/nope.png,0,0,train\n";
    try {
        load_manifest(dir / "manifest.csv");
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_NE(std::string(e.what()).find("images/nope.png"), std::string::npos) << e.what();
    }
    fs::remove_all(dir);
}

TEST(Manifest, MalformedRowsNameTheRow) {
    const fs::path dir = temp_dir("malformed");
    for (const std::string body : {"a.png,0,0\n", "a.png,x,0,train\n", "a.png,0,0,holdout\n", "a.png,0,0,train\nb.png,2,0,train\n"}) {
        std::ofstream(dir / "manifest.csv") << "path,class_id,domain_id,pool\n" << body;
        try {
            load_manifest(dir / "manifest.csv");
            FAIL() << body;
        } catch (const LoadError& e) {
            EXPECT_NE(std::string(e.what()).find("row"), std::string::npos) << e.what();
        }
    }
    fs::remove_all(dir);
}

TEST(Preprocess, IdentityWhenNothingToDo) {
    const GridConfig g = small_config();
    const DatasetGrid grid = build_grid(g);
    const Sample& s = grid.pool(1, 1, Pool::Train)[0];
    PreprocessSpec spec;
    spec.target_size = g.image_size;
    EXPECT_EQ(preprocess(s, spec, PreprocessMode::Train).pixels.data, s.pixels.data);
    EXPECT_EQ(preprocess(s, spec, PreprocessMode::Eval).pixels.data, s.pixels.data);
}

TEST(Preprocess, BilinearOnConstantIsConstant) {
    Image img(3, 2, 2, 0.37f);
    const Image out = resize_bilinear(img, 4, 4);
    for (float v : out.data) EXPECT_FLOAT_EQ(v, 0.37f);
    Image one(3, 1, 1, 0.5f);
    EXPECT_EQ(resize_bilinear(one, 3, 3).data.size(), 27u);
}

TEST(Preprocess, TranslationOffsetEnumeration) {
    // floor(u * 0.1 * 16) over u in [0, 1] only takes the values 0 and 1.
    std::set<int> seen;
    for (int i = 0; i <= 100000; ++i) seen.insert(translation_offset(i / 100000.0, 0.1, 16));
    EXPECT_EQ(seen, (std::set<int>{0, 1}));
}

TEST(Preprocess, TrainTranslateIsDeterministicAndInRange) {
    const GridConfig g = small_config();
    const DatasetGrid grid = build_grid(g);
    PreprocessSpec spec;
    spec.random_translate_max = 0.1;
    spec.augment_seed = 5;
    std::set<std::vector<float>> variants;
    for (const Sample& s : grid.pool(0, 0, Pool::Train)) {
        const Sample a = preprocess(s, spec, PreprocessMode::Train, 1);
        EXPECT_EQ(a.pixels.data, preprocess(s, spec, PreprocessMode::Train, 1).pixels.data);
        EXPECT_EQ(preprocess(s, spec, PreprocessMode::Eval, 1).pixels.data, s.pixels.data);
        for (float v : a.pixels.data) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
    spec.random_translate_max = 0.6;
    EXPECT_THROW(spec.validate(), ArgumentError);
}

TEST(Preprocess, CenterCropMakesSquare) {
    Image img(3, 4, 6, 0.0f);
    img.at(0, 0, 1) = 1.0f;  // outside the central 4x4 window
    img.at(0, 1, 2) = 0.5f;
    const Image c = center_crop_square(img);
    EXPECT_EQ(c.height, 4);
    EXPECT_EQ(c.width, 4);
    EXPECT_FLOAT_EQ(c.at(0, 1, 1), 0.5f);
}
