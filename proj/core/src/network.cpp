#include "mdb/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mdb/error.hpp"
#include "mdb/rng.hpp"

namespace mdb {
namespace {

// Activations are stored channel-major ([C][N][H][W]) so a convolution over
// the whole batch is a single GEMM per sample chunk and BN reduces over
// contiguous rows.
template <typename T>
struct Act {
    int c = 0, n = 0, h = 0, w = 0;
    std::vector<T> data;

    Act() = default;
    Act(int c_, int n_, int h_, int w_) : c(c_), n(n_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * n_ * h_ * w_, T(0)) {}
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t row() const { return static_cast<std::size_t>(n) * h * w; }
    T* channel(int ci) { return data.data() + ci * row(); }
    const T* channel(int ci) const { return data.data() + ci * row(); }
};

template <typename T>
struct View {
    const ModelConfig* cfg = nullptr;
    std::vector<const T*> p;
    std::vector<const T*> b;
};

// Parameter / buffer indices in declaration order.
constexpr int kStemConv = 0, kStemGamma = 1, kStemBeta = 2;
constexpr int block_base(int b) { return 3 + 6 * b; }
constexpr int head_weight(int n_blocks) { return 3 + 6 * n_blocks; }
constexpr int buffer_base(int bn_layer) { return 2 * bn_layer; }  // mean, var
constexpr int bn_layer_count(int n_blocks) { return 1 + 2 * n_blocks; }

// ---- GEMM kernels (row-major) -------------------------------------------
// Register-blocked micro-kernels. Each output element accumulates its inner
// products in a fixed order independent of the blocking, so results do not
// depend on matrix shapes or tile boundaries.

constexpr int kPanel = 256;  // columns of B packed per pass
constexpr int kMr = 4;       // rows per micro-tile

template <typename T>
struct Vec;
template <>
struct Vec<float> {
    typedef float type __attribute__((vector_size(16)));
};
template <>
struct Vec<double> {
    typedef double type __attribute__((vector_size(16)));
};

// C[r][j] += sum_t a(r, t) * B[t][j], a(r, t) = A[r * ars + t * ats].
template <typename T>
void gemm_rows(int R, int N, int Tn, const T* A, std::size_t ars, std::size_t ats, const T* B, std::size_t ldb,
               T* C, std::size_t ldc) {
    using V = typename Vec<T>::type;
    constexpr int W = sizeof(V) / sizeof(T);
    constexpr int kNr = 2 * W;  // columns per micro-tile
    thread_local std::vector<T> packed;
    for (int j0 = 0; j0 < N; j0 += kPanel) {
        const int jend = std::min(N, j0 + kPanel);
        const int full = (jend - j0) / kNr;
        // Pack full column strips as [strip][t][kNr].
        packed.resize(static_cast<std::size_t>(full) * Tn * kNr);
        for (int s = 0; s < full; ++s)
            for (int t = 0; t < Tn; ++t)
                std::copy_n(B + t * ldb + j0 + s * kNr, kNr, packed.data() + (static_cast<std::size_t>(s) * Tn + t) * kNr);
        int r = 0;
        for (; r + kMr <= R; r += kMr) {
            for (int s = 0; s < full; ++s) {
                const int j = j0 + s * kNr;
                V acc[kMr][2];
                for (int ii = 0; ii < kMr; ++ii) {
                    std::memcpy(&acc[ii][0], C + (r + ii) * ldc + j, sizeof(V));
                    std::memcpy(&acc[ii][1], C + (r + ii) * ldc + j + W, sizeof(V));
                }
                const T* bp = packed.data() + static_cast<std::size_t>(s) * Tn * kNr;
                const T* a0 = A + (r + 0) * ars;
                const T* a1 = A + (r + 1) * ars;
                const T* a2 = A + (r + 2) * ars;
                const T* a3 = A + (r + 3) * ars;
                for (int t = 0; t < Tn; ++t) {
                    V b0, b1;
                    std::memcpy(&b0, bp + t * kNr, sizeof(V));
                    std::memcpy(&b1, bp + t * kNr + W, sizeof(V));
                    const T s0 = a0[t * ats], s1 = a1[t * ats], s2 = a2[t * ats], s3 = a3[t * ats];
                    acc[0][0] += s0 * b0;
                    acc[0][1] += s0 * b1;
                    acc[1][0] += s1 * b0;
                    acc[1][1] += s1 * b1;
                    acc[2][0] += s2 * b0;
                    acc[2][1] += s2 * b1;
                    acc[3][0] += s3 * b0;
                    acc[3][1] += s3 * b1;
                }
                for (int ii = 0; ii < kMr; ++ii) {
                    std::memcpy(C + (r + ii) * ldc + j, &acc[ii][0], sizeof(V));
                    std::memcpy(C + (r + ii) * ldc + j + W, &acc[ii][1], sizeof(V));
                }
            }
            for (int j = j0 + full * kNr; j < jend; ++j)
                for (int ii = 0; ii < kMr; ++ii) {
                    T acc = C[(r + ii) * ldc + j];
                    for (int t = 0; t < Tn; ++t) acc += A[(r + ii) * ars + t * ats] * B[t * ldb + j];
                    C[(r + ii) * ldc + j] = acc;
                }
        }
        for (; r < R; ++r)
            for (int j = j0; j < jend; ++j) {
                T acc = C[r * ldc + j];
                for (int t = 0; t < Tn; ++t) acc += A[r * ars + t * ats] * B[t * ldb + j];
                C[r * ldc + j] = acc;
            }
    }
}

// C[M][N] += A[M][K] * B[K][N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc) {
    gemm_rows(M, N, K, A, lda, 1, B, ldb, C, ldc);
}

// C[K][N] += A[M][K]^T * B[M][N]
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc) {
    gemm_rows(K, N, M, A, 1, lda, B, ldb, C, ldc);
}

// C[M][K] += A[M][N] * B[K][N]^T. Each dot product keeps one partial sum per
// vector lane (index mod lane count), reduced pairwise at the end; 2x4 output
// blocks share loads.
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc) {
    using V = typename Vec<T>::type;
    constexpr int W = sizeof(V) / sizeof(T);
    const int nv = N - N % W;
    auto load = [](const T* p) {
        V v;
        std::memcpy(&v, p, sizeof(V));
        return v;
    };
    auto finish = [&](V lanes, const T* a, const T* b) {
        T s = lanes[0] + lanes[1];
        if constexpr (W == 4) s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
        for (int j = nv; j < N; ++j) s += a[j] * b[j];
        return s;
    };
    auto single = [&](int i, int k) {
        const T* a = A + i * lda;
        const T* b = B + k * ldb;
        V acc = {};
        for (int j = 0; j < nv; j += W) acc += load(a + j) * load(b + j);
        C[i * ldc + k] += finish(acc, a, b);
    };
    int i = 0;
    for (; i + 2 <= M; i += 2) {
        const T* a0 = A + i * lda;
        const T* a1 = a0 + lda;
        int k = 0;
        for (; k + 4 <= K; k += 4) {
            const T* b0 = B + k * ldb;
            const T* b1 = b0 + ldb;
            const T* b2 = b1 + ldb;
            const T* b3 = b2 + ldb;
            V c00 = {}, c01 = {}, c02 = {}, c03 = {}, c10 = {}, c11 = {}, c12 = {}, c13 = {};
            for (int j = 0; j < nv; j += W) {
                const V x0 = load(a0 + j), x1 = load(a1 + j);
                const V y0 = load(b0 + j), y1 = load(b1 + j), y2 = load(b2 + j), y3 = load(b3 + j);
                c00 += x0 * y0;
                c01 += x0 * y1;
                c02 += x0 * y2;
                c03 += x0 * y3;
                c10 += x1 * y0;
                c11 += x1 * y1;
                c12 += x1 * y2;
                c13 += x1 * y3;
            }
            C[i * ldc + k] += finish(c00, a0, b0);
            C[i * ldc + k + 1] += finish(c01, a0, b1);
            C[i * ldc + k + 2] += finish(c02, a0, b2);
            C[i * ldc + k + 3] += finish(c03, a0, b3);
            C[(i + 1) * ldc + k] += finish(c10, a1, b0);
            C[(i + 1) * ldc + k + 1] += finish(c11, a1, b1);
            C[(i + 1) * ldc + k + 2] += finish(c12, a1, b2);
            C[(i + 1) * ldc + k + 3] += finish(c13, a1, b3);
        }
        for (; k < K; ++k) {
            single(i, k);
            single(i + 1, k);
        }
    }
    for (; i < M; ++i)
        for (int k = 0; k < K; ++k) single(i, k);
}

// ---- Convolution (3x3, pad 1) ------------------------------------------

int chunk_samples(int out_plane) { return std::max(1, 4096 / std::max(1, out_plane)); }

template <typename T>
void im2col(const Act<T>& x, int n0, int n1, int stride, int ho, int wo, T* col) {
    const std::size_t cols = static_cast<std::size_t>(n1 - n0) * ho * wo;
    for (int ci = 0; ci < x.c; ++ci) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * cols;
                for (int n = n0; n < n1; ++n) {
                    const T* src = x.channel(ci) + static_cast<std::size_t>(n) * x.plane();
                    T* dst = row + static_cast<std::size_t>(n - n0) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + ky - 1;
                        T* d = dst + oy * wo;
                        if (iy < 0 || iy >= x.h) {
                            std::fill(d, d + wo, T(0));
                            continue;
                        }
                        const T* s = src + static_cast<std::size_t>(iy) * x.w;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kx - 1;
                            d[ox] = (ix >= 0 && ix < x.w) ? s[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int n0, int n1, int stride, int ho, int wo, Act<T>& dx) {
    const std::size_t cols = static_cast<std::size_t>(n1 - n0) * ho * wo;
    for (int ci = 0; ci < dx.c; ++ci) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * cols;
                for (int n = n0; n < n1; ++n) {
                    T* dst = dx.channel(ci) + static_cast<std::size_t>(n) * dx.plane();
                    const T* s = row + static_cast<std::size_t>(n - n0) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + ky - 1;
                        if (iy < 0 || iy >= dx.h) continue;
                        T* d = dst + static_cast<std::size_t>(iy) * dx.w;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kx - 1;
                            if (ix >= 0 && ix < dx.w) d[ix] += s[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

int conv_out(int in, int stride) { return (in - 1) / stride + 1; }

template <typename T>
Act<T> conv_forward(const Act<T>& x, const T* weight, int cout, int stride) {
    const int ho = conv_out(x.h, stride), wo = conv_out(x.w, stride);
    Act<T> y(cout, x.n, ho, wo);
    const int K = x.c * 9;
    const int chunk = chunk_samples(ho * wo);
    std::vector<T> col;
    for (int n0 = 0; n0 < x.n; n0 += chunk) {
        const int n1 = std::min(x.n, n0 + chunk);
        const int cols = (n1 - n0) * ho * wo;
        col.resize(static_cast<std::size_t>(K) * cols);
        im2col(x, n0, n1, stride, ho, wo, col.data());
        gemm_nn(cout, cols, K, weight, K, col.data(), cols, y.data.data() + static_cast<std::size_t>(n0) * ho * wo, y.row());
    }
    return y;
}

// Accumulates dW; if dx is non-null accumulates the input gradient.
template <typename T>
void conv_backward(const Act<T>& x, const T* weight, const Act<T>& dy, int stride, T* dweight, Act<T>* dx) {
    const int ho = dy.h, wo = dy.w, cout = dy.c;
    const int K = x.c * 9;
    const int chunk = chunk_samples(ho * wo);
    std::vector<T> col, dcol;
    for (int n0 = 0; n0 < x.n; n0 += chunk) {
        const int n1 = std::min(x.n, n0 + chunk);
        const int cols = (n1 - n0) * ho * wo;
        col.resize(static_cast<std::size_t>(K) * cols);
        im2col(x, n0, n1, stride, ho, wo, col.data());
        const T* dyp = dy.data.data() + static_cast<std::size_t>(n0) * ho * wo;
        gemm_nt(cout, cols, K, dyp, dy.row(), col.data(), cols, dweight, K);
        if (dx) {
            dcol.assign(static_cast<std::size_t>(K) * cols, T(0));
            gemm_tn(cout, cols, K, weight, K, dyp, dy.row(), dcol.data(), cols);
            col2im_add(dcol.data(), n0, n1, stride, ho, wo, *dx);
        }
    }
}

// ---- Batch normalization ---------------------------------------------------

template <typename T>
struct BnCache {
    std::vector<T> xhat;
    std::vector<double> inv_std;
};

template <typename T>
void bn_train(Act<T>& z, const T* gamma, const T* beta, BnCache<T>& cache, std::vector<double>& mean_out,
              std::vector<double>& var_out) {
    const std::size_t m = z.row();
    cache.xhat.resize(z.data.size());
    cache.inv_std.resize(z.c);
    mean_out.assign(z.c, 0.0);
    var_out.assign(z.c, 0.0);
    for (int c = 0; c < z.c; ++c) {
        T* r = z.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += r[i];
        const double mean = s / static_cast<double>(m);
        double ss = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double d = r[i] - mean;
            ss += d * d;
        }
        const double var = ss / static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
        cache.inv_std[c] = inv;
        mean_out[c] = mean;
        var_out[c] = m > 1 ? ss / static_cast<double>(m - 1) : 0.0;
        T* xh = cache.xhat.data() + c * m;
        const T tm = static_cast<T>(mean), ti = static_cast<T>(inv);
        for (std::size_t i = 0; i < m; ++i) {
            xh[i] = (r[i] - tm) * ti;
            r[i] = gamma[c] * xh[i] + beta[c];
        }
    }
}

template <typename T>
void bn_eval(Act<T>& z, const T* gamma, const T* beta, const T* mean, const T* var) {
    const std::size_t m = z.row();
    for (int c = 0; c < z.c; ++c) {
        const T scale = static_cast<T>(gamma[c] / std::sqrt(static_cast<double>(var[c]) + kBatchNormEps));
        const T shift = beta[c] - mean[c] * scale;
        T* r = z.channel(c);
        for (std::size_t i = 0; i < m; ++i) r[i] = r[i] * scale + shift;
    }
}

// dy -> dz in place; accumulates dgamma, dbeta.
template <typename T>
void bn_backward(Act<T>& dy, const T* gamma, const BnCache<T>& cache, T* dgamma, T* dbeta) {
    const std::size_t m = dy.row();
    for (int c = 0; c < dy.c; ++c) {
        T* g = dy.channel(c);
        const T* xh = cache.xhat.data() + c * m;
        double sb = 0.0, sg = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            sb += g[i];
            sg += static_cast<double>(g[i]) * xh[i];
        }
        dbeta[c] += static_cast<T>(sb);
        dgamma[c] += static_cast<T>(sg);
        const double k = gamma[c] * cache.inv_std[c] / static_cast<double>(m);
        const T tk = static_cast<T>(k);
        const T tm = static_cast<T>(static_cast<double>(m));
        const T tsb = static_cast<T>(sb), tsg = static_cast<T>(sg);
        for (std::size_t i = 0; i < m; ++i) g[i] = tk * (tm * g[i] - tsb - xh[i] * tsg);
    }
}

template <typename T>
void relu(Act<T>& a) {
    for (T& v : a.data) v = v > T(0) ? v : T(0);
}

// dy *= (out > 0)
template <typename T>
void relu_backward(Act<T>& dy, const Act<T>& out) {
    for (std::size_t i = 0; i < dy.data.size(); ++i)
        if (!(out.data[i] > T(0))) dy.data[i] = T(0);
}

template <typename T>
Act<T> shortcut(const Act<T>& x, int cout, int stride) {
    if (stride == 1 && cout == x.c) return x;
    const int ho = conv_out(x.h, stride), wo = conv_out(x.w, stride);
    Act<T> y(cout, x.n, ho, wo);
    for (int c = 0; c < x.c; ++c)
        for (int n = 0; n < x.n; ++n)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox)
                    y.channel(c)[(static_cast<std::size_t>(n) * ho + oy) * wo + ox] =
                        x.channel(c)[(static_cast<std::size_t>(n) * x.h + oy * stride) * x.w + ox * stride];
    return y;
}

template <typename T>
void shortcut_backward(const Act<T>& dy, int stride, Act<T>& dx) {
    if (stride == 1 && dy.c == dx.c) {
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
        return;
    }
    for (int c = 0; c < dx.c; ++c)
        for (int n = 0; n < dx.n; ++n)
            for (int oy = 0; oy < dy.h; ++oy)
                for (int ox = 0; ox < dy.w; ++ox)
                    dx.channel(c)[(static_cast<std::size_t>(n) * dx.h + oy * stride) * dx.w + ox * stride] +=
                        dy.channel(c)[(static_cast<std::size_t>(n) * dy.h + oy) * dy.w + ox];
}

// ---- Whole network -------------------------------------------------------

template <typename T>
struct BlockTape {
    Act<T> in;
    Act<T> h1;
    BnCache<T> bn1, bn2;
    Act<T> out;
    int stride = 1;
};

template <typename T>
struct Tape {
    Act<T> input;
    BnCache<T> stem_bn;
    Act<T> stem_out;
    std::vector<BlockTape<T>> blocks;
    std::vector<T> pooled;        // [C][N]
    std::vector<double> logits;   // [N][K]
};

template <typename T>
Act<T> to_cnhw(std::span<const T> nchw, int n, int c, int h, int w) {
    Act<T> a(c, n, h, w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            std::copy_n(nchw.data() + (static_cast<std::size_t>(i) * c + ch) * plane, plane,
                        a.channel(ch) + static_cast<std::size_t>(i) * plane);
    return a;
}

template <typename T>
void run_forward(const View<T>& v, Act<T> input, bool train, Tape<T>& tape, BatchNormStats* stats) {
    const ModelConfig& cfg = *v.cfg;
    const int nb = cfg.n_blocks;
    if (stats) {
        stats->mean.assign(bn_layer_count(nb), {});
        stats->var.assign(bn_layer_count(nb), {});
    }
    auto bn = [&](Act<T>& z, int layer, int gi, BnCache<T>& cache) {
        if (train) {
            std::vector<double> mean, var;
            bn_train(z, v.p[gi], v.p[gi + 1], cache, mean, var);
            if (stats) {
                stats->mean[layer] = std::move(mean);
                stats->var[layer] = std::move(var);
            }
        } else {
            bn_eval(z, v.p[gi], v.p[gi + 1], v.b[buffer_base(layer)], v.b[buffer_base(layer) + 1]);
        }
    };

    tape.input = std::move(input);
    tape.stem_out = conv_forward(tape.input, v.p[kStemConv], cfg.stem_width, 1);
    bn(tape.stem_out, 0, kStemGamma, tape.stem_bn);
    relu(tape.stem_out);

    tape.blocks.assign(nb, {});
    const Act<T>* cur = &tape.stem_out;
    for (int b = 0; b < nb; ++b) {
        BlockTape<T>& bt = tape.blocks[b];
        const int width = cfg.block_width(b);
        bt.stride = b == 0 ? 1 : 2;
        bt.in = *cur;
        const int base = block_base(b);
        bt.h1 = conv_forward(bt.in, v.p[base], width, bt.stride);
        bn(bt.h1, 1 + 2 * b, base + 1, bt.bn1);
        relu(bt.h1);
        bt.out = conv_forward(bt.h1, v.p[base + 3], width, 1);
        bn(bt.out, 2 + 2 * b, base + 4, bt.bn2);
        const Act<T> sc = shortcut(bt.in, width, bt.stride);
        for (std::size_t i = 0; i < bt.out.data.size(); ++i) bt.out.data[i] += sc.data[i];
        relu(bt.out);
        cur = &bt.out;
    }

    const Act<T>& last = *cur;
    const int C = last.c, N = last.n, K = cfg.n_classes;
    tape.pooled.assign(static_cast<std::size_t>(C) * N, T(0));
    const std::size_t plane = last.plane();
    for (int c = 0; c < C; ++c) {
        for (int n = 0; n < N; ++n) {
            const T* r = last.channel(c) + static_cast<std::size_t>(n) * plane;
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += r[i];
            tape.pooled[static_cast<std::size_t>(c) * N + n] = static_cast<T>(s / static_cast<double>(plane));
        }
    }
    const T* hw = v.p[head_weight(nb)];
    const T* hb = v.p[head_weight(nb) + 1];
    tape.logits.assign(static_cast<std::size_t>(N) * K, 0.0);
    for (int n = 0; n < N; ++n) {
        for (int k = 0; k < K; ++k) {
            T s = hb[k];
            for (int c = 0; c < C; ++c) s += hw[static_cast<std::size_t>(k) * C + c] * tape.pooled[static_cast<std::size_t>(c) * N + n];
            tape.logits[static_cast<std::size_t>(n) * K + k] = static_cast<double>(s);
        }
    }
}

// Mean cross-entropy; fills dlogits = (softmax - onehot) / N.
double cross_entropy(const std::vector<double>& logits, int N, int K, std::span<const int> labels,
                     std::vector<double>& dlogits) {
    dlogits.assign(logits.size(), 0.0);
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        const double* z = logits.data() + static_cast<std::size_t>(n) * K;
        const double mx = *std::max_element(z, z + K);
        double s = 0.0;
        for (int k = 0; k < K; ++k) s += std::exp(z[k] - mx);
        const double lse = mx + std::log(s);
        loss += lse - z[labels[n]];
        double* g = dlogits.data() + static_cast<std::size_t>(n) * K;
        for (int k = 0; k < K; ++k) g[k] = std::exp(z[k] - lse) / N;
        g[labels[n]] -= 1.0 / N;
    }
    return loss / N;
}

template <typename T>
std::vector<std::vector<T>> run_backward(const View<T>& v, Tape<T>& tape, const std::vector<double>& dlogits,
                                         const std::vector<std::size_t>& sizes) {
    const ModelConfig& cfg = *v.cfg;
    const int nb = cfg.n_blocks;
    std::vector<std::vector<T>> grads(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) grads[i].assign(sizes[i], T(0));

    const Act<T>& last = nb > 0 ? tape.blocks.back().out : tape.stem_out;
    const int C = last.c, N = last.n, K = cfg.n_classes;
    const int hwi = head_weight(nb);
    const T* hw = v.p[hwi];
    std::vector<T>& dhw = grads[hwi];
    std::vector<T>& dhb = grads[hwi + 1];
    std::vector<T> dpooled(static_cast<std::size_t>(C) * N, T(0));
    for (int n = 0; n < N; ++n) {
        for (int k = 0; k < K; ++k) {
            const T g = static_cast<T>(dlogits[static_cast<std::size_t>(n) * K + k]);
            dhb[k] += g;
            for (int c = 0; c < C; ++c) {
                dhw[static_cast<std::size_t>(k) * C + c] += g * tape.pooled[static_cast<std::size_t>(c) * N + n];
                dpooled[static_cast<std::size_t>(c) * N + n] += g * hw[static_cast<std::size_t>(k) * C + c];
            }
        }
    }
    Act<T> dcur(last.c, last.n, last.h, last.w);
    const std::size_t plane = last.plane();
    const T inv_plane = static_cast<T>(1.0 / static_cast<double>(plane));
    for (int c = 0; c < C; ++c)
        for (int n = 0; n < N; ++n) {
            T* r = dcur.channel(c) + static_cast<std::size_t>(n) * plane;
            const T g = dpooled[static_cast<std::size_t>(c) * N + n] * inv_plane;
            for (std::size_t i = 0; i < plane; ++i) r[i] = g;
        }

    for (int b = nb - 1; b >= 0; --b) {
        BlockTape<T>& bt = tape.blocks[b];
        const int base = block_base(b);
        relu_backward(dcur, bt.out);
        Act<T> din(bt.in.c, bt.in.n, bt.in.h, bt.in.w);
        shortcut_backward(dcur, bt.stride, din);
        bn_backward(dcur, v.p[base + 4], bt.bn2, grads[base + 4].data(), grads[base + 5].data());
        Act<T> dh1(bt.h1.c, bt.h1.n, bt.h1.h, bt.h1.w);
        conv_backward(bt.h1, v.p[base + 3], dcur, 1, grads[base + 3].data(), &dh1);
        relu_backward(dh1, bt.h1);
        bn_backward(dh1, v.p[base + 1], bt.bn1, grads[base + 1].data(), grads[base + 2].data());
        conv_backward(bt.in, v.p[base], dh1, bt.stride, grads[base].data(), &din);
        dcur = std::move(din);
    }

    relu_backward(dcur, tape.stem_out);
    bn_backward(dcur, v.p[kStemGamma], tape.stem_bn, grads[kStemGamma].data(), grads[kStemBeta].data());
    conv_backward<T>(tape.input, v.p[kStemConv], dcur, 1, grads[kStemConv].data(), nullptr);
    return grads;
}

View<float> view_of(const ParamState& s) {
    View<float> v{&s.config, {}, {}};
    for (const Tensor& t : s.params) v.p.push_back(t.data.data());
    for (const Tensor& t : s.buffers) v.b.push_back(t.data.data());
    return v;
}

View<double> view_of(const ParamsF64& s) {
    View<double> v{&s.config, {}, {}};
    for (const auto& t : s.params) v.p.push_back(t.data());
    for (const auto& t : s.buffers) v.b.push_back(t.data());
    return v;
}

void check_batch(const ModelConfig& cfg, const Batch& batch) {
    if (batch.channels != cfg.channels || batch.height != cfg.input_size || batch.width != cfg.input_size) {
        throw ArgumentError("batch images are " + std::to_string(batch.channels) + "x" +
                            std::to_string(batch.height) + "x" + std::to_string(batch.width) +
                            ", model expects " + std::to_string(cfg.channels) + "x" +
                            std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size));
    }
    if (batch.data.size() != static_cast<std::size_t>(batch.n) * batch.image_numel()) {
        throw ArgumentError("batch data size does not match its shape");
    }
}

void check_labels(const ModelConfig& cfg, int n, std::span<const int> labels) {
    if (static_cast<int>(labels.size()) != n) throw ArgumentError("label count does not match batch size");
    for (int l : labels)
        if (l < 0 || l >= cfg.n_classes) throw ArgumentError("label " + std::to_string(l) + " out of range");
}

Tensor make_tensor(std::string name, std::vector<int> shape, float fill = 0.0f) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return Tensor{std::move(name), std::move(shape), std::vector<float>(n, fill)};
}

void fill_uniform(Tensor& t, double bound, SplitMix64 rng) {
    for (float& x : t.data) x = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
}

}  // namespace

void ModelConfig::validate() const {
    if (input_size < 1) throw ArgumentError("input_size must be >= 1");
    if (channels < 1) throw ArgumentError("channels must be >= 1");
    if (stem_width < 1) throw ArgumentError("stem_width must be >= 1");
    if (n_blocks < 0 || n_blocks > 8) throw ArgumentError("n_blocks must lie in [0, 8]");
    if (n_classes < 2) throw ArgumentError("n_classes must be >= 2");
}

int ModelConfig::block_size(int block) const {
    int s = input_size;
    for (int b = 1; b <= block; ++b) s = conv_out(s, 2);
    return s;
}

std::size_t ParamState::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params) n += t.numel();
    return n;
}

const Tensor& ParamState::param(const std::string& name) const {
    for (const Tensor& t : params)
        if (t.name == name) return t;
    throw ArgumentError("no parameter named '" + name + "'");
}

Tensor& ParamState::param(const std::string& name) {
    return const_cast<Tensor&>(std::as_const(*this).param(name));
}

ParamState init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ParamState s;
    s.config = config;
    auto bn_layer = [&](const std::string& prefix, int width) {
        s.params.push_back(make_tensor(prefix + ".gamma", {width}, 1.0f));
        s.params.push_back(make_tensor(prefix + ".beta", {width}, 0.0f));
        s.buffers.push_back(make_tensor(prefix + ".running_mean", {width}, 0.0f));
        s.buffers.push_back(make_tensor(prefix + ".running_var", {width}, 1.0f));
    };
    s.params.push_back(make_tensor("stem.conv.weight", {config.stem_width, config.channels, 3, 3}));
    bn_layer("stem.bn", config.stem_width);
    int in = config.stem_width;
    for (int b = 0; b < config.n_blocks; ++b) {
        const int w = config.block_width(b);
        const std::string p = "block" + std::to_string(b);
        s.params.push_back(make_tensor(p + ".conv1.weight", {w, in, 3, 3}));
        bn_layer(p + ".bn1", w);
        s.params.push_back(make_tensor(p + ".conv2.weight", {w, w, 3, 3}));
        bn_layer(p + ".bn2", w);
        in = w;
    }
    s.params.push_back(make_tensor("head.weight", {config.n_classes, in}));
    s.params.push_back(make_tensor("head.bias", {config.n_classes}, 0.0f));

    for (std::size_t i = 0; i < s.params.size(); ++i) {
        Tensor& t = s.params[i];
        SplitMix64 rng(stream_key(seed, {tag(StreamTag::Init), i}));
        if (t.shape.size() == 4) {
            const int fan_in = t.shape[1] * 9;
            fill_uniform(t, std::sqrt(6.0 / fan_in), rng);
        } else if (t.name == "head.weight") {
            fill_uniform(t, 1.0 / std::sqrt(static_cast<double>(t.shape[1])), rng);
        }
    }
    for (const Tensor& t : s.params) {
        s.m.push_back(make_tensor(t.name, t.shape, 0.0f));
        s.v.push_back(make_tensor(t.name, t.shape, 0.0f));
    }
    return s;
}

std::vector<float> forward(const ParamState& params, const Batch& batch) {
    check_batch(params.config, batch);
    const View<float> v = view_of(params);
    Tape<float> tape;
    run_forward(v, to_cnhw<float>(batch.data, batch.n, batch.channels, batch.height, batch.width), false, tape, nullptr);
    return std::vector<float>(tape.logits.begin(), tape.logits.end());
}

std::vector<int> argmax_rows(std::span<const float> logits, int n_classes) {
    const std::size_t n = logits.size() / static_cast<std::size_t>(n_classes);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float* r = logits.data() + i * n_classes;
        int best = 0;
        for (int k = 1; k < n_classes; ++k)
            if (r[k] > r[best]) best = k;
        out[i] = best;
    }
    return out;
}

std::vector<int> predict(const ParamState& params, const Batch& batch) {
    return argmax_rows(forward(params, batch), params.config.n_classes);
}

LossAndGrad loss_and_grad(const ParamState& params, const Batch& batch, std::span<const int> labels) {
    check_batch(params.config, batch);
    check_labels(params.config, batch.n, labels);
    const View<float> v = view_of(params);
    Tape<float> tape;
    LossAndGrad out;
    run_forward(v, to_cnhw<float>(batch.data, batch.n, batch.channels, batch.height, batch.width), true, tape,
                &out.batch_stats);
    std::vector<double> dlogits;
    out.loss = cross_entropy(tape.logits, batch.n, params.config.n_classes, labels, dlogits);
    std::vector<std::size_t> sizes;
    for (const Tensor& t : params.params) sizes.push_back(t.numel());
    out.grads = run_backward(v, tape, dlogits, sizes);
    return out;
}

void update_running_stats(ParamState& params, const BatchNormStats& stats) {
    for (std::size_t layer = 0; layer < stats.mean.size(); ++layer) {
        Tensor& rm = params.buffers[buffer_base(static_cast<int>(layer))];
        Tensor& rv = params.buffers[buffer_base(static_cast<int>(layer)) + 1];
        for (std::size_t c = 0; c < rm.data.size(); ++c) {
            rm.data[c] = static_cast<float>((1.0 - kBatchNormMomentum) * rm.data[c] + kBatchNormMomentum * stats.mean[layer][c]);
            rv.data[c] = static_cast<float>((1.0 - kBatchNormMomentum) * rv.data[c] + kBatchNormMomentum * stats.var[layer][c]);
        }
    }
}

ParamsF64 to_f64(const ParamState& params) {
    ParamsF64 out{params.config, {}, {}};
    for (const Tensor& t : params.params) out.params.emplace_back(t.data.begin(), t.data.end());
    for (const Tensor& t : params.buffers) out.buffers.emplace_back(t.data.begin(), t.data.end());
    return out;
}

std::vector<double> to_f64(const Batch& batch) { return {batch.data.begin(), batch.data.end()}; }

double loss_f64(const ParamsF64& params, std::span<const double> images, int n, std::span<const int> labels) {
    check_labels(params.config, n, labels);
    const View<double> v = view_of(params);
    Tape<double> tape;
    const int s = params.config.input_size;
    run_forward(v, to_cnhw<double>(images, n, params.config.channels, s, s), true, tape, nullptr);
    std::vector<double> dlogits;
    return cross_entropy(tape.logits, n, params.config.n_classes, labels, dlogits);
}

std::vector<std::vector<double>> grad_f64(const ParamsF64& params, std::span<const double> images, int n,
                                          std::span<const int> labels, double* loss) {
    check_labels(params.config, n, labels);
    const View<double> v = view_of(params);
    Tape<double> tape;
    const int s = params.config.input_size;
    run_forward(v, to_cnhw<double>(images, n, params.config.channels, s, s), true, tape, nullptr);
    std::vector<double> dlogits;
    const double l = cross_entropy(tape.logits, n, params.config.n_classes, labels, dlogits);
    if (loss) *loss = l;
    std::vector<std::size_t> sizes;
    for (const auto& p : params.params) sizes.push_back(p.size());
    return run_backward(v, tape, dlogits, sizes);
}

}  // namespace mdb
