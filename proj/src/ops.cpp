#include "emoflow/ops.hpp"

#include <algorithm>
#include <cmath>

namespace emoflow {

using autograd::Node;
using autograd::NodeP;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!same_shape(a.shape(), b.shape()))
        throw shape_error(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_2d(const Tensor& a, const char* what) {
    if (a.ndim() != 2) throw shape_error(std::string(what) + ": expected 2-D tensor, got " + shape_str(a.shape()));
}

// v may be {D} or {1,D}; returns D after validating against cols.
int rowvec_len(const Tensor& v, int cols, const char* what) {
    if (v.numel() != cols)
        throw shape_error(std::string(what) + ": vector length " + std::to_string(v.numel()) +
                          " does not match column count " + std::to_string(cols));
    return cols;
}

// C(m,n) += A(m,k)·B(k,n); optional transposes read A as (k,m) / B as (n,k).
void gemm_acc(double* c, const double* a, const double* b, int m, int k, int n, bool ta, bool tb) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            double av = ta ? a[static_cast<size_t>(l) * m + i] : a[static_cast<size_t>(i) * k + l];
            if (av == 0.0) continue;
            if (!tb) {
                const double* brow = b + static_cast<size_t>(l) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<size_t>(j) * k + l];
            }
        }
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        accumulate_grad(*self.parents[0], self.grad.data(), self.numel());
        accumulate_grad(*self.parents[1], self.grad.data(), self.numel());
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        accumulate_grad(*self.parents[0], self.grad.data(), self.numel());
        Node& pb = *self.parents[1];
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor neg(const Tensor& a) {
    return scale(a, -1.0);
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (double& v : out) v *= c;
    return make_op(a.shape(), std::move(out), {a}, [c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += c * self.grad[i];
    });
}

Tensor add_const(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (double& v : out) v += c;
    return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
        accumulate_grad(*self.parents[0], self.grad.data(), self.numel());
    });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw shape_error("scale_by: scale must be a one-element tensor");
    double sv = s.values()[0];
    std::vector<double> out(a.values());
    for (double& v : out) v *= sv;
    return make_op(a.shape(), std::move(out), {a, s}, [sv](Node& self) {
        Node& pa = *self.parents[0];
        Node& ps = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += sv * self.grad[i];
        }
        if (ps.requires_grad) {
            ps.ensure_grad();
            double acc = 0.0;
            for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa.value[i];
            ps.grad[0] += acc;
        }
    });
}

Tensor log_op(const Tensor& a) {
    std::vector<double> out(a.values());
    for (double& v : out) v = std::log(v);
    return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] / p.value[i];
    });
}

Tensor exp_op(const Tensor& a) {
    std::vector<double> out(a.values());
    for (double& v : out) v = std::exp(v);
    return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * self.value[i];
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.values());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
    });
}

Tensor gelu(const Tensor& a) {
    // exact erf form
    std::vector<double> out(a.values());
    for (double& v : out) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double x = p.value[i];
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            p.grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    });
}

Tensor clamp_min(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (double& v : out) v = std::max(v, c);
    return make_op(a.shape(), std::move(out), {a}, [c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (p.value[i] > c) p.grad[i] += self.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    return make_op({1}, {acc}, {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        double g = self.grad[0];
        for (double& pg : p.grad) pg += g;
    });
}

Tensor mean_all(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    double inv = 1.0 / static_cast<double>(a.numel());
    return make_op({1}, {acc * inv}, {a}, [inv](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        double g = self.grad[0] * inv;
        for (double& pg : p.grad) pg += g;
    });
}

Tensor mean_over_rows(const Tensor& a) {
    check_2d(a, "mean_over_rows");
    int t = a.dim(0), d = a.dim(1);
    std::vector<double> out(static_cast<size_t>(d), 0.0);
    const auto& av = a.values();
    for (int r = 0; r < t; ++r)
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(j)] += av[static_cast<size_t>(r) * d + j];
    double inv = 1.0 / t;
    for (double& v : out) v *= inv;
    return make_op({d}, std::move(out), {a}, [t, d, inv](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int r = 0; r < t; ++r)
            for (int j = 0; j < d; ++j) p.grad[static_cast<size_t>(r) * d + j] += self.grad[static_cast<size_t>(j)] * inv;
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw shape_error("reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    return make_op(std::move(shape), a.values(), {a}, [](Node& self) {
        accumulate_grad(*self.parents[0], self.grad.data(), self.numel());
    });
}

Tensor transpose(const Tensor& a) {
    check_2d(a, "transpose");
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    const auto& av = a.values();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
    return make_op({n, m}, std::move(out), {a}, [m, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) p.grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
    });
}

Tensor row(const Tensor& a, int r) {
    check_2d(a, "row");
    int t = a.dim(0), d = a.dim(1);
    if (r < 0 || r >= t) throw shape_error("row: index out of range");
    const auto& av = a.values();
    std::vector<double> out(av.begin() + static_cast<size_t>(r) * d, av.begin() + static_cast<size_t>(r + 1) * d);
    return make_op({d}, std::move(out), {a}, [r, d](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int j = 0; j < d; ++j) p.grad[static_cast<size_t>(r) * d + j] += self.grad[static_cast<size_t>(j)];
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw shape_error("stack_rows: empty input");
    int d = static_cast<int>(rows[0].numel());
    int n = static_cast<int>(rows.size());
    std::vector<double> out;
    out.reserve(static_cast<size_t>(n) * d);
    for (const Tensor& r : rows) {
        if (r.numel() != d) throw shape_error("stack_rows: inconsistent row lengths");
        const auto& v = r.values();
        out.insert(out.end(), v.begin(), v.end());
    }
    return make_op({n, d}, std::move(out), rows, [d](Node& self) {
        for (size_t i = 0; i < self.parents.size(); ++i)
            accumulate_grad(*self.parents[i], self.grad.data() + i * static_cast<size_t>(d), d);
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    check_2d(a, "concat_cols");
    check_2d(b, "concat_cols");
    if (a.dim(0) != b.dim(0)) throw shape_error("concat_cols: row counts differ");
    int t = a.dim(0), da = a.dim(1), db = b.dim(1);
    std::vector<double> out(static_cast<size_t>(t) * (da + db));
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int r = 0; r < t; ++r) {
        std::copy_n(av.begin() + static_cast<size_t>(r) * da, da, out.begin() + static_cast<size_t>(r) * (da + db));
        std::copy_n(bv.begin() + static_cast<size_t>(r) * db, db, out.begin() + static_cast<size_t>(r) * (da + db) + da);
    }
    return make_op({t, da + db}, std::move(out), {a, b}, [t, da, db](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        int w = da + db;
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < da; ++j)
                    pa.grad[static_cast<size_t>(r) * da + j] += self.grad[static_cast<size_t>(r) * w + j];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < db; ++j)
                    pb.grad[static_cast<size_t>(r) * db + j] += self.grad[static_cast<size_t>(r) * w + da + j];
        }
    });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    check_2d(a, "slice_cols");
    int t = a.dim(0), d = a.dim(1);
    if (c0 < 0 || c1 > d || c0 >= c1) throw shape_error("slice_cols: bad column range");
    int w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(t) * w);
    const auto& av = a.values();
    for (int r = 0; r < t; ++r)
        std::copy_n(av.begin() + static_cast<size_t>(r) * d + c0, w, out.begin() + static_cast<size_t>(r) * w);
    return make_op({t, w}, std::move(out), {a}, [t, d, c0, w](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int r = 0; r < t; ++r)
            for (int j = 0; j < w; ++j)
                p.grad[static_cast<size_t>(r) * d + c0 + j] += self.grad[static_cast<size_t>(r) * w + j];
    });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    check_2d(table, "gather_rows");
    if (ids.empty()) throw data_error("gather_rows: empty id list");
    int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v) throw data_error("gather_rows: id out of range");
    std::vector<double> out(ids.size() * static_cast<size_t>(d));
    const auto& tv = table.values();
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(tv.begin() + static_cast<size_t>(ids[i]) * d, d, out.begin() + i * d);
    std::vector<int> ids_copy = ids;
    return make_op({static_cast<int>(ids.size()), d}, std::move(out), {table},
                   [ids_copy = std::move(ids_copy), d](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (size_t i = 0; i < ids_copy.size(); ++i)
                           for (int j = 0; j < d; ++j)
                               p.grad[static_cast<size_t>(ids_copy[i]) * d + j] += self.grad[i * d + j];
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw shape_error("matmul: inner dimensions disagree " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    gemm_acc(out.data(), a.values().data(), b.values().data(), m, k, n, false, false);
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA(m,k) += G(m,n)·B(k,n)^T
            gemm_acc(pa.grad.data(), self.grad.data(), pb.value.data(), m, n, k, false, true);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB(k,n) += A(m,k)^T·G(m,n)
            gemm_acc(pb.grad.data(), pa.value.data(), self.grad.data(), k, m, n, true, false);
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_rowvec(matmul(x, w), b);
}

Tensor linear_vec(const Tensor& v, const Tensor& w, const Tensor& b) {
    Tensor x = v.ndim() == 2 ? v : reshape(v, {1, static_cast<int>(v.numel())});
    return reshape(linear(x, w, b), {w.dim(1)});
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    check_2d(x, "add_rowvec");
    int t = x.dim(0), d = x.dim(1);
    rowvec_len(v, d, "add_rowvec");
    std::vector<double> out(x.values());
    const auto& vv = v.values();
    for (int r = 0; r < t; ++r)
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(r) * d + j] += vv[static_cast<size_t>(j)];
    return make_op(x.shape(), std::move(out), {x, v}, [t, d](Node& self) {
        Node& px = *self.parents[0];
        Node& pv = *self.parents[1];
        if (px.requires_grad) accumulate_grad(px, self.grad.data(), self.numel());
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < d; ++j) pv.grad[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(r) * d + j];
        }
    });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
    check_2d(x, "mul_rowvec");
    int t = x.dim(0), d = x.dim(1);
    rowvec_len(v, d, "mul_rowvec");
    std::vector<double> out(x.values());
    const auto& vv = v.values();
    for (int r = 0; r < t; ++r)
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(r) * d + j] *= vv[static_cast<size_t>(j)];
    return make_op(x.shape(), std::move(out), {x, v}, [t, d](Node& self) {
        Node& px = *self.parents[0];
        Node& pv = *self.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < d; ++j)
                    px.grad[static_cast<size_t>(r) * d + j] += self.grad[static_cast<size_t>(r) * d + j] * pv.value[static_cast<size_t>(j)];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < d; ++j)
                    pv.grad[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(r) * d + j] * px.value[static_cast<size_t>(r) * d + j];
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    check_2d(x, "softmax_rows");
    int t = x.dim(0), d = x.dim(1);
    std::vector<double> out(static_cast<size_t>(t) * d);
    const auto& xv = x.values();
    for (int r = 0; r < t; ++r) {
        const double* xr = xv.data() + static_cast<size_t>(r) * d;
        double* yr = out.data() + static_cast<size_t>(r) * d;
        double mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        double inv = 1.0 / z;
        for (int j = 0; j < d; ++j) yr[j] *= inv;
    }
    return make_op({t, d}, std::move(out), {x}, [t, d](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int r = 0; r < t; ++r) {
            const double* y = self.value.data() + static_cast<size_t>(r) * d;
            const double* g = self.grad.data() + static_cast<size_t>(r) * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += y[j] * g[j];
            double* pg = p.grad.data() + static_cast<size_t>(r) * d;
            for (int j = 0; j < d; ++j) pg[j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor layer_norm_rows(const Tensor& x) {
    check_2d(x, "layer_norm_rows");
    constexpr double kEps = 1e-12;
    int t = x.dim(0), d = x.dim(1);
    std::vector<double> out(static_cast<size_t>(t) * d);
    std::vector<double> inv_std(static_cast<size_t>(t));
    const auto& xv = x.values();
    for (int r = 0; r < t; ++r) {
        const double* xr = xv.data() + static_cast<size_t>(r) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = xr[j] - mean;
            var += c * c;
        }
        var /= d;
        double istd = 1.0 / std::sqrt(var + kEps);
        inv_std[static_cast<size_t>(r)] = istd;
        double* yr = out.data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) yr[j] = (xr[j] - mean) * istd;
    }
    return make_op({t, d}, std::move(out), {x}, [t, d, inv_std = std::move(inv_std)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int r = 0; r < t; ++r) {
            const double* y = self.value.data() + static_cast<size_t>(r) * d;
            const double* g = self.grad.data() + static_cast<size_t>(r) * d;
            double gmean = 0.0, gydot = 0.0;
            for (int j = 0; j < d; ++j) {
                gmean += g[j];
                gydot += g[j] * y[j];
            }
            gmean /= d;
            gydot /= d;
            double istd = inv_std[static_cast<size_t>(r)];
            double* pg = p.grad.data() + static_cast<size_t>(r) * d;
            for (int j = 0; j < d; ++j) pg[j] += istd * (g[j] - gmean - y[j] * gydot);
        }
    });
}

Tensor l2_normalize_rows(const Tensor& x) {
    check_2d(x, "l2_normalize_rows");
    int t = x.dim(0), d = x.dim(1);
    std::vector<double> out(static_cast<size_t>(t) * d);
    std::vector<double> inv_norm(static_cast<size_t>(t));
    const auto& xv = x.values();
    for (int r = 0; r < t; ++r) {
        const double* xr = xv.data() + static_cast<size_t>(r) * d;
        double sq = 0.0;
        for (int j = 0; j < d; ++j) sq += xr[j] * xr[j];
        double inv = 1.0 / std::sqrt(std::max(sq, 1e-24));
        inv_norm[static_cast<size_t>(r)] = inv;
        double* yr = out.data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) yr[j] = xr[j] * inv;
    }
    return make_op({t, d}, std::move(out), {x}, [t, d, inv_norm = std::move(inv_norm)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int r = 0; r < t; ++r) {
            const double* y = self.value.data() + static_cast<size_t>(r) * d;
            const double* g = self.grad.data() + static_cast<size_t>(r) * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += y[j] * g[j];
            double inv = inv_norm[static_cast<size_t>(r)];
            double* pg = p.grad.data() + static_cast<size_t>(r) * d;
            for (int j = 0; j < d; ++j) pg[j] += inv * (g[j] - y[j] * dot);
        }
    });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw config_error("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return x;
    // inverted dropout: kept activations scaled by 1/(1-p) so eval is identity
    double keep = 1.0 - p;
    std::vector<double> mask(static_cast<size_t>(x.numel()));
    for (double& m : mask) m = rng.uniform() < p ? 0.0 : 1.0 / keep;
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor conv1d_same3(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_2d(x, "conv1d_same3");
    if (w.ndim() != 3 || w.dim(2) != 3) throw shape_error("conv1d_same3: weight must be {Cout,Cin,3}");
    int t = x.dim(0), cin = x.dim(1), cout = w.dim(0);
    if (w.dim(1) != cin) throw shape_error("conv1d_same3: Cin mismatch");
    rowvec_len(b, cout, "conv1d_same3 bias");
    std::vector<double> out(static_cast<size_t>(t) * cout);
    const auto& xv = x.values();
    const auto& wv = w.values();
    const auto& bv = b.values();
    for (int r = 0; r < t; ++r) {
        double* yr = out.data() + static_cast<size_t>(r) * cout;
        for (int o = 0; o < cout; ++o) {
            double acc = bv[static_cast<size_t>(o)];
            const double* wo = wv.data() + static_cast<size_t>(o) * cin * 3;
            for (int k = 0; k < 3; ++k) {
                int rr = r + k - 1;
                if (rr < 0 || rr >= t) continue;
                const double* xr = xv.data() + static_cast<size_t>(rr) * cin;
                for (int c = 0; c < cin; ++c) acc += wo[static_cast<size_t>(c) * 3 + k] * xr[c];
            }
            yr[o] = acc;
        }
    }
    return make_op({t, cout}, std::move(out), {x, w, b}, [t, cin, cout](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int r = 0; r < t; ++r) {
            const double* g = self.grad.data() + static_cast<size_t>(r) * cout;
            for (int o = 0; o < cout; ++o) {
                double go = g[o];
                if (go == 0.0) continue;
                if (pb.requires_grad) pb.grad[static_cast<size_t>(o)] += go;
                for (int k = 0; k < 3; ++k) {
                    int rr = r + k - 1;
                    if (rr < 0 || rr >= t) continue;
                    for (int c = 0; c < cin; ++c) {
                        size_t wi = (static_cast<size_t>(o) * cin + c) * 3 + k;
                        size_t xi = static_cast<size_t>(rr) * cin + c;
                        if (pw.requires_grad) pw.grad[wi] += go * px.value[xi];
                        if (px.requires_grad) px.grad[xi] += go * pw.value[wi];
                    }
                }
            }
        }
    });
}

MhaParams MhaParams::init(int d, Rng rng) {
    double s = 1.0 / std::sqrt(static_cast<double>(d));
    MhaParams p;
    Rng rq = rng.split("wq"), rk = rng.split("wk"), rv = rng.split("wv"), ro = rng.split("wo");
    p.wq = Tensor::randn({d, d}, rq, s).set_requires_grad();
    p.bq = Tensor::zeros({d}).set_requires_grad();
    p.wk = Tensor::randn({d, d}, rk, s).set_requires_grad();
    p.bk = Tensor::zeros({d}).set_requires_grad();
    p.wv = Tensor::randn({d, d}, rv, s).set_requires_grad();
    p.bv = Tensor::zeros({d}).set_requires_grad();
    p.wo = Tensor::randn({d, d}, ro, s).set_requires_grad();
    p.bo = Tensor::zeros({d}).set_requires_grad();
    return p;
}

Tensor multi_head_attention(const Tensor& x, const MhaParams& p, int heads) {
    check_2d(x, "multi_head_attention");
    int d = x.dim(1);
    if (heads <= 0 || d % heads != 0)
        throw config_error("multi_head_attention: model dim " + std::to_string(d) +
                           " not divisible by heads " + std::to_string(heads));
    int dk = d / heads;
    Tensor q = linear(x, p.wq, p.bq);
    Tensor k = linear(x, p.wk, p.bk);
    Tensor v = linear(x, p.wv, p.bv);
    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    Tensor merged;
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
        Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
        Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
        Tensor attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dk));
        Tensor oh = matmul(attn, vh);
        merged = h == 0 ? oh : concat_cols(merged, oh);
    }
    return linear(merged, p.wo, p.bo);
}

std::vector<double> sinusoidal_features(double pos, int d) {
    if (d % 2 != 0) throw config_error("sinusoidal features require even dimension");
    std::vector<double> out(static_cast<size_t>(d));
    for (int i = 0; i < d / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * i / d);
        out[static_cast<size_t>(2 * i)] = std::sin(pos * freq);
        out[static_cast<size_t>(2 * i + 1)] = std::cos(pos * freq);
    }
    return out;
}

Tensor sinusoidal_pe(int t_len, int d, double pos_scale) {
    if (d % 2 != 0) throw config_error("sinusoidal_pe: dimension must be even");
    std::vector<double> out;
    out.reserve(static_cast<size_t>(t_len) * d);
    for (int pos = 0; pos < t_len; ++pos) {
        auto f = sinusoidal_features(pos * pos_scale, d);
        out.insert(out.end(), f.begin(), f.end());
    }
    return Tensor({t_len, d}, std::move(out));
}

Tensor kl_div(const Tensor& s, const Tensor& m) {
    check_same_shape(s, m, "kl_div");
    const auto& sv = s.values();
    const auto& mv = m.values();
    double acc = 0.0;
    for (size_t i = 0; i < sv.size(); ++i) {
        if (sv[i] > 0.0) {
            if (mv[i] <= 0.0) throw data_error("kl_div: target has zero mass where source is positive");
            acc += sv[i] * std::log(sv[i] / mv[i]);
        }
    }
    return make_op({1}, {acc}, {s, m}, [](Node& self) {
        Node& ps = *self.parents[0];
        Node& pm = *self.parents[1];
        double g = self.grad[0];
        if (ps.requires_grad) {
            ps.ensure_grad();
            for (size_t i = 0; i < ps.value.size(); ++i)
                if (ps.value[i] > 0.0) ps.grad[i] += g * (std::log(ps.value[i] / pm.value[i]) + 1.0);
        }
        if (pm.requires_grad) {
            pm.ensure_grad();
            for (size_t i = 0; i < pm.value.size(); ++i)
                if (ps.value[i] > 0.0) pm.grad[i] -= g * ps.value[i] / pm.value[i];
        }
    });
}

}  // namespace emoflow
