#include "felab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "felab/errors.hpp"
#include "felab/trainer.hpp"

namespace felab {

std::vector<double> recon_error_per_level(FEParams& params, const ModelConfig& cfg,
                                          const Tensor& x_eval) {
    Tape tape;
    ForwardOutputs out =
        forward_full(tape, params, cfg, x_eval, nullptr, /*training=*/false, nullptr, nullptr);
    std::vector<double> re;
    for (int id : out.x_hat) re.push_back(tape.scalar(tape.mse(out.x, id)));
    return re;
}

Tensor latent_responses(FEParams& params, const ModelConfig& cfg, const Tensor& x_eval) {
    Tape tape;
    ForwardOutputs out =
        forward_full(tape, params, cfg, x_eval, nullptr, /*training=*/false, nullptr, nullptr);
    const Tensor& mu = tape.value(out.mu);
    const int B = x_eval.rows();
    Tensor L({B, cfg.latent_cols()});
    int col = 0;
    if (!cfg.baseline_vae) {
        const Tensor& z0 = tape.value(cfg.supervised ? out.y_hat : out.mu0);
        for (int c = 0; c < z0.cols(); ++c, ++col)
            for (int r = 0; r < B; ++r) L.at(r, col) = z0.at(r, c);
    }
    for (int c = 0; c < mu.cols(); ++c, ++col)
        for (int r = 0; r < B; ++r) L.at(r, col) = mu.at(r, c);
    return L;
}

namespace {

double digamma(double x) {
    // Recurrence up to the asymptotic regime, then the standard series.
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    return result;
}

// Deterministic tie-breaking jitter derived from the element index.
double jitter(std::size_t i, std::uint64_t salt) {
    return 1e-10 * (static_cast<double>(splitmix64(i ^ salt) >> 11) * 0x1.0p-53 - 0.5);
}

bool standardize(std::vector<double>& v) {
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    if (var <= 0.0) return false;
    const double inv_std = 1.0 / std::sqrt(var);
    for (double& x : v) x = (x - mean) * inv_std;
    return true;
}

}  // namespace

MiResult ksg_mi(const std::vector<double>& a, const std::vector<double>& b, int k) {
    if (a.size() != b.size()) throw ShapeError("ksg_mi: sample counts differ");
    const std::size_t n = a.size();
    if (static_cast<long>(n) < k + 2) throw ConfigError("ksg_mi: need at least k+2 samples");

    std::vector<double> x = a, y = b;
    MiResult res;
    if (!standardize(x) || !standardize(y)) {
        res.degenerate = true;
        return res;
    }
    for (std::size_t i = 0; i < n; ++i) {
        x[i] += jitter(i, 0x5ca1ab1eULL);
        y[i] += jitter(i, 0xdecafbadULL);
    }

    std::vector<double> xs = x, ys = y;
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());

    auto count_within = [](const std::vector<double>& sorted, double center, double radius) {
        // strictly inside (center - radius, center + radius), self included
        auto lo = std::upper_bound(sorted.begin(), sorted.end(), center - radius);
        auto hi = std::lower_bound(sorted.begin(), sorted.end(), center + radius);
        return static_cast<long>(hi - lo) - 1;  // drop the point itself
    };

    std::vector<double> dist(n);
    double psi_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            dist[j] = std::max(std::fabs(x[i] - x[j]), std::fabs(y[i] - y[j]));
        dist[i] = std::numeric_limits<double>::infinity();
        std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
        const double eps_i = dist[k - 1];  // distance to the k-th neighbour
        const long nx = std::max(count_within(xs, x[i], eps_i), 0L);
        const long ny = std::max(count_within(ys, y[i], eps_i), 0L);
        psi_sum += digamma(static_cast<double>(nx + 1)) + digamma(static_cast<double>(ny + 1));
    }
    res.raw = digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) -
              psi_sum / static_cast<double>(n);
    res.nats = std::max(res.raw, 0.0);
    return res;
}

namespace {

std::vector<double> column(const Tensor& m, int c) {
    std::vector<double> v(m.rows());
    for (int r = 0; r < m.rows(); ++r) v[static_cast<std::size_t>(r)] = m.at(r, c);
    return v;
}

Tensor mi_matrix_impl(const Tensor& latents, const Tensor& factors, int k, bool clamped) {
    if (latents.rows() != factors.rows()) throw ShapeError("mi_matrix: row counts differ");
    Tensor out({latents.cols(), factors.cols()});
    for (int i = 0; i < latents.cols(); ++i) {
        std::vector<double> li = column(latents, i);
        for (int j = 0; j < factors.cols(); ++j) {
            MiResult r = ksg_mi(li, column(factors, j), k);
            out.at(i, j) = clamped ? r.nats : r.raw;
        }
    }
    return out;
}

}  // namespace

Tensor mi_matrix(const Tensor& latents, const Tensor& factors, int k) {
    return mi_matrix_impl(latents, factors, k, true);
}

Tensor mi_matrix_raw(const Tensor& latents, const Tensor& factors, int k) {
    return mi_matrix_impl(latents, factors, k, false);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[order[t]] = midrank;
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ShapeError("spearman: sample counts differ");
    if (x.size() < 2) throw ConfigError("spearman: need at least two samples");
    return pearson(ranks(x), ranks(y));
}

StabilityResult stability_score(const Tensor& run_a, const Tensor& run_b) {
    if (run_a.cols() != run_b.cols())
        throw ConfigError("stability: latent counts differ between runs");
    if (run_a.rows() != run_b.rows())
        throw ConfigError("stability: runs must be evaluated on the same inputs");
    StabilityResult res;
    for (int c = 0; c < run_a.cols(); ++c) {
        double s = std::fabs(spearman(column(run_a, c), column(run_b, c)));
        res.per_latent.push_back(s);
        res.mean += s;
    }
    res.mean /= static_cast<double>(run_a.cols());
    return res;
}

void symmetric_eigen(const Tensor& m, std::vector<double>& eigenvalues, Tensor& eigenvectors) {
    const int d = m.rows();
    if (m.cols() != d) throw ShapeError("symmetric_eigen: matrix must be square");
    Tensor a = m;
    Tensor v({d, d});
    for (int i = 0; i < d; ++i) v.at(i, i) = 1.0;

    // Cyclic Jacobi sweeps.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-26) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                const double apq = a.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < d; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < d; ++i) {
                    const double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return a.at(x, x) > a.at(y, y); });
    eigenvalues.resize(d);
    eigenvectors = Tensor({d, d});
    for (int c = 0; c < d; ++c) {
        eigenvalues[c] = a.at(order[c], order[c]);
        for (int r = 0; r < d; ++r) eigenvectors.at(r, c) = v.at(r, order[c]);
    }
}

PcaResult pca_oracle(const Tensor& x, int k) {
    const int n = x.rows(), d = x.cols();
    if (k < 1 || k > d) throw ConfigError("pca_oracle: k out of range");
    if (n < 2) throw ConfigError("pca_oracle: need at least two rows");
    PcaResult res;
    res.mean.assign(d, 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) res.mean[c] += x.at(r, c);
    for (double& m : res.mean) m /= n;

    Tensor cov({d, d});
    for (int r = 0; r < n; ++r)
        for (int i = 0; i < d; ++i) {
            const double xi = x.at(r, i) - res.mean[i];
            for (int j = i; j < d; ++j) cov.at(i, j) += xi * (x.at(r, j) - res.mean[j]);
        }
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            cov.at(i, j) /= n;  // population covariance: trunc error matches measured MSE
            cov.at(j, i) = cov.at(i, j);
        }

    Tensor vecs;
    symmetric_eigen(cov, res.eigenvalues, vecs);
    res.components = Tensor({d, k});
    for (int c = 0; c < k; ++c)
        for (int r = 0; r < d; ++r) res.components.at(r, c) = vecs.at(r, c);
    double tail = 0.0;
    for (int i = k; i < d; ++i) tail += res.eigenvalues[i];
    res.truncation_mse = tail / d;
    return res;
}

namespace {

// Modified Gram-Schmidt; throws on rank deficiency.
Tensor orthonormalize(const Tensor& m) {
    Tensor q = m;
    const int rows = q.rows(), cols = q.cols();
    for (int c = 0; c < cols; ++c) {
        for (int prev = 0; prev < c; ++prev) {
            double dot = 0.0;
            for (int r = 0; r < rows; ++r) dot += q.at(r, prev) * q.at(r, c);
            for (int r = 0; r < rows; ++r) q.at(r, c) -= dot * q.at(r, prev);
        }
        double norm = 0.0;
        for (int r = 0; r < rows; ++r) norm += q.at(r, c) * q.at(r, c);
        norm = std::sqrt(norm);
        if (norm < 1e-10) throw ConfigError("principal_angles: rank-deficient input");
        for (int r = 0; r < rows; ++r) q.at(r, c) /= norm;
    }
    return q;
}

}  // namespace

std::vector<double> principal_angles(const Tensor& u, const Tensor& v) {
    if (u.rows() != v.rows()) throw ShapeError("principal_angles: ambient dimensions differ");
    Tensor qu = orthonormalize(u);
    Tensor qv = orthonormalize(v);
    const int p = qu.cols(), q = qv.cols();
    Tensor m({p, q});
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) {
            double dot = 0.0;
            for (int r = 0; r < qu.rows(); ++r) dot += qu.at(r, i) * qv.at(r, j);
            m.at(i, j) = dot;
        }
    // Singular values of M via the eigenvalues of M^T M.
    const int s = std::min(p, q);
    Tensor mtm({q, q});
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) {
            double dot = 0.0;
            for (int r = 0; r < p; ++r) dot += m.at(r, i) * m.at(r, j);
            mtm.at(i, j) = dot;
        }
    std::vector<double> evals;
    Tensor evecs;
    symmetric_eigen(mtm, evals, evecs);
    std::vector<double> angles;
    for (int i = 0; i < s; ++i) {
        double sv = std::sqrt(std::max(evals[i], 0.0));
        sv = std::min(sv, 1.0);
        angles.push_back(std::acos(sv) * 180.0 / 3.14159265358979323846);
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

Histogram histogram(const std::vector<double>& values, int bins, double lo, double hi) {
    if (bins < 1 || !(lo < hi)) throw ConfigError("histogram: bad binning");
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(bins, 0);
    double sum = 0.0, sumsq = 0.0;
    for (double v : values) {
        sum += v;
        sumsq += v * v;
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        if (b < 0) b = 0;                 // clamp outliers into the edge bins
        if (b >= bins) b = bins - 1;
        h.counts[b] += 1;
        h.total += 1;
    }
    if (h.total > 0) {
        h.mean = sum / h.total;
        const double var = std::max(sumsq / h.total - h.mean * h.mean, 0.0);
        h.stddev = std::sqrt(var);
    }
    return h;
}

std::vector<std::vector<std::vector<double>>> traversal_responses(
    FEParams& params, const ModelConfig& cfg, const SystemSpec& spec,
    const std::vector<double>& grid) {
    const int latents = cfg.latent_cols();
    std::vector<std::vector<std::vector<double>>> out(
        latents, std::vector<std::vector<double>>(spec.n_inputs));
    for (int j = 0; j < spec.n_inputs; ++j) {
        Tensor x = traversal_curves(spec, j, grid);
        Tensor L = latent_responses(params, cfg, x);
        for (int i = 0; i < latents; ++i) {
            out[i][j].resize(grid.size());
            for (std::size_t g = 0; g < grid.size(); ++g)
                out[i][j][g] = L.at(static_cast<int>(g), i);
        }
    }
    return out;
}

}  // namespace felab
