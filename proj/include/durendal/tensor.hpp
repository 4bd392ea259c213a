#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "durendal/errors.hpp"

namespace durendal {

/// Dense row-major 64-bit-float array. Rank is 2 in practice; scalars are
/// 1x1. Parameters are Tensors owned by a model; everything produced during
/// a forward pass lives on the Tape.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // same length as values when requires_grad

    Tensor() = default;

    Tensor(std::vector<std::size_t> shp, std::vector<double> vals, bool req = false)
        : shape(std::move(shp)), values(std::move(vals)), requires_grad(req) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        if (n != values.size())
            throw DimensionError("tensor: values length " + std::to_string(values.size()) +
                                 " does not match shape product " + std::to_string(n));
        if (requires_grad) grad.assign(values.size(), 0.0);
    }

    static Tensor scalar(double v, bool req = false) { return Tensor({1, 1}, {v}, req); }

    static Tensor zeros(std::size_t r, std::size_t c, bool req = false) {
        return Tensor({r, c}, std::vector<double>(r * c, 0.0), req);
    }

    static Tensor full(std::size_t r, std::size_t c, double v, bool req = false) {
        return Tensor({r, c}, std::vector<double>(r * c, v), req);
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows_init,
                         bool req = false) {
        std::size_t r = rows_init.size();
        std::size_t c = r ? rows_init.begin()->size() : 0;
        std::vector<double> v;
        v.reserve(r * c);
        for (const auto& row : rows_init) {
            if (row.size() != c) throw DimensionError("tensor: ragged initializer");
            v.insert(v.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(v), req);
    }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
    std::size_t numel() const { return values.size(); }
    bool is_scalar() const { return numel() == 1; }

    double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

    void zero_grad() {
        if (requires_grad) grad.assign(values.size(), 0.0);
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }
};

/// Handle to a tape node.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Define-by-run reverse-mode tape. Rebuilt per forward pass; confined to
/// one worker. Node order is the topological order (an op's inputs always
/// have smaller ids).
class Tape {
public:
    static constexpr double kBceEps = 1e-12;

    /// Lease an external parameter onto the tape. backward() accumulates
    /// into `p.grad` when `p.requires_grad`.
    Var param(Tensor& p) {
        Node n;
        n.op = "param";
        n.value = p;  // copy; the tape never aliases external storage
        n.leaf = &p;
        return push(std::move(n));
    }

    /// A value that does not receive gradients.
    Var constant(Tensor v) {
        Node n;
        n.op = "const";
        n.value = std::move(v);
        return push(std::move(n));
    }

    Var matmul(Var a, Var b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (A.cols() != B.rows())
            throw DimensionError("matmul: inner dimensions differ, " + A.shape_str() + " vs " +
                                 B.shape_str());
        std::size_t n = A.rows(), k = A.cols(), m = B.cols();
        Tensor C = Tensor::zeros(n, m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double av = A.values[i * k + p];
                if (av == 0.0) continue;
                const double* brow = &B.values[p * m];
                double* crow = &C.values[i * m];
                for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
            }
        flops_ += 2ull * n * k * m;
        return make("matmul", {a, b}, std::move(C), [a, b](Tape& t, const Node& node) {
            const Tensor& A = t.val(a);
            const Tensor& B = t.val(b);
            std::size_t n = A.rows(), k = A.cols(), m = B.cols();
            const auto& dC = node.grad;
            auto& dA = t.grad_buf(a);
            auto& dB = t.grad_buf(b);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j)
                        acc += dC[i * m + j] * B.values[p * m + j];
                    dA[i * k + p] += acc;
                }
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < m; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        acc += A.values[i * k + p] * dC[i * m + j];
                    dB[p * m + j] += acc;
                }
        });
    }

    Var add(Var a, Var b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require_same_shape("add", A, B);
        Tensor C = A;
        C.requires_grad = false;
        C.grad.clear();
        for (std::size_t i = 0; i < C.values.size(); ++i) C.values[i] += B.values[i];
        flops_ += C.numel();
        return make("add", {a, b}, std::move(C), [a, b](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            auto& dB = t.grad_buf(b);
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                dA[i] += node.grad[i];
                dB[i] += node.grad[i];
            }
        });
    }

    Var sub(Var a, Var b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require_same_shape("sub", A, B);
        Tensor C = A;
        C.requires_grad = false;
        C.grad.clear();
        for (std::size_t i = 0; i < C.values.size(); ++i) C.values[i] -= B.values[i];
        flops_ += C.numel();
        return make("sub", {a, b}, std::move(C), [a, b](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            auto& dB = t.grad_buf(b);
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                dA[i] += node.grad[i];
                dB[i] -= node.grad[i];
            }
        });
    }

    /// Broadcast-add a 1xd row vector to every row of an nxd matrix.
    Var add_rowvec(Var m, Var v) {
        const Tensor& M = val(m);
        const Tensor& V = val(v);
        if (V.rows() != 1 || V.cols() != M.cols())
            throw DimensionError("add_rowvec: want 1x" + std::to_string(M.cols()) + ", got " +
                                 V.shape_str());
        Tensor C = M;
        C.requires_grad = false;
        C.grad.clear();
        std::size_t n = M.rows(), d = M.cols();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) C.values[i * d + j] += V.values[j];
        flops_ += C.numel();
        return make("add_rowvec", {m, v}, std::move(C), [m, v](Tape& t, const Node& node) {
            std::size_t d = t.val(v).cols();
            std::size_t n = node.value.rows();
            auto& dM = t.grad_buf(m);
            auto& dV = t.grad_buf(v);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    dM[i * d + j] += node.grad[i * d + j];
                    dV[j] += node.grad[i * d + j];
                }
        });
    }

    Var elementwise_mul(Var a, Var b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require_same_shape("elementwise_mul", A, B);
        Tensor C = A;
        C.requires_grad = false;
        C.grad.clear();
        for (std::size_t i = 0; i < C.values.size(); ++i) C.values[i] *= B.values[i];
        flops_ += C.numel();
        return make("elementwise_mul", {a, b}, std::move(C), [a, b](Tape& t, const Node& node) {
            const Tensor& A = t.val(a);
            const Tensor& B = t.val(b);
            auto& dA = t.grad_buf(a);
            auto& dB = t.grad_buf(b);
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                dA[i] += node.grad[i] * B.values[i];
                dB[i] += node.grad[i] * A.values[i];
            }
        });
    }

    /// out[i,j] = M[i,j] * c[i], with c an nx1 column.
    Var mul_colvec(Var m, Var c) {
        const Tensor& M = val(m);
        const Tensor& C0 = val(c);
        if (C0.cols() != 1 || C0.rows() != M.rows())
            throw DimensionError("mul_colvec: want " + std::to_string(M.rows()) + "x1, got " +
                                 C0.shape_str());
        Tensor C = M;
        C.requires_grad = false;
        C.grad.clear();
        std::size_t n = M.rows(), d = M.cols();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) C.values[i * d + j] *= C0.values[i];
        flops_ += C.numel();
        return make("mul_colvec", {m, c}, std::move(C), [m, c](Tape& t, const Node& node) {
            const Tensor& M = t.val(m);
            const Tensor& Cv = t.val(c);
            auto& dM = t.grad_buf(m);
            auto& dc = t.grad_buf(c);
            std::size_t n = M.rows(), d = M.cols();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    dM[i * d + j] += node.grad[i * d + j] * Cv.values[i];
                    dc[i] += node.grad[i * d + j] * M.values[i * d + j];
                }
        });
    }

    /// Multiply by a taped 1x1 scalar (gradient flows into both operands).
    Var mul_scalar(Var m, Var s) {
        const Tensor& M = val(m);
        const Tensor& S = val(s);
        if (!S.is_scalar()) throw DimensionError("mul_scalar: scalar operand is " + S.shape_str());
        Tensor C = M;
        C.requires_grad = false;
        C.grad.clear();
        double sv = S.values[0];
        for (auto& x : C.values) x *= sv;
        flops_ += C.numel();
        return make("mul_scalar", {m, s}, std::move(C), [m, s](Tape& t, const Node& node) {
            const Tensor& M = t.val(m);
            double sv = t.val(s).values[0];
            auto& dM = t.grad_buf(m);
            auto& dS = t.grad_buf(s);
            double acc = 0.0;
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                dM[i] += node.grad[i] * sv;
                acc += node.grad[i] * M.values[i];
            }
            dS[0] += acc;
        });
    }

    /// Multiply by a compile-time constant.
    Var scale(Var a, double c) {
        Tensor C = val(a);
        C.requires_grad = false;
        C.grad.clear();
        for (auto& x : C.values) x *= c;
        flops_ += C.numel();
        return make("scale", {a}, std::move(C), [a, c](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            for (std::size_t i = 0; i < node.grad.size(); ++i) dA[i] += c * node.grad[i];
        });
    }

    /// Replicate a 1xd row vector into n rows.
    Var broadcast_rows(Var v, std::size_t n) {
        const Tensor& V = val(v);
        if (V.rows() != 1) throw DimensionError("broadcast_rows: want a 1xd row, got " + V.shape_str());
        std::size_t d = V.cols();
        Tensor C = Tensor::zeros(n, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) C.values[i * d + j] = V.values[j];
        return make("broadcast_rows", {v}, std::move(C), [v, n](Tape& t, const Node& node) {
            std::size_t d = t.val(v).cols();
            auto& dV = t.grad_buf(v);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) dV[j] += node.grad[i * d + j];
        });
    }

    Var concat_rows(std::span<const Var> parts) {
        if (parts.empty()) throw ContractError("concat_rows: empty input");
        std::size_t d = val(parts[0]).cols(), n = 0;
        for (Var p : parts) {
            if (val(p).cols() != d)
                throw DimensionError("concat_rows: column mismatch " + val(p).shape_str());
            n += val(p).rows();
        }
        Tensor C = Tensor::zeros(n, d);
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor& P = val(p);
            std::copy(P.values.begin(), P.values.end(), C.values.begin() + off);
            off += P.values.size();
        }
        std::vector<Var> owned(parts.begin(), parts.end());
        return make("concat_rows", owned, std::move(C), [owned](Tape& t, const Node& node) {
            std::size_t off = 0;
            for (Var p : owned) {
                auto& dP = t.grad_buf(p);
                for (std::size_t i = 0; i < dP.size(); ++i) dP[i] += node.grad[off + i];
                off += dP.size();
            }
        });
    }

    Var concat_rows(std::initializer_list<Var> parts) {
        std::vector<Var> v(parts);
        return concat_rows(std::span<const Var>(v));
    }

    Var concat_cols(std::span<const Var> parts) {
        if (parts.empty()) throw ContractError("concat_cols: empty input");
        std::size_t n = val(parts[0]).rows(), d = 0;
        for (Var p : parts) {
            if (val(p).rows() != n)
                throw DimensionError("concat_cols: row mismatch " + val(p).shape_str());
            d += val(p).cols();
        }
        Tensor C = Tensor::zeros(n, d);
        std::size_t coff = 0;
        for (Var p : parts) {
            const Tensor& P = val(p);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < P.cols(); ++j)
                    C.values[i * d + coff + j] = P.values[i * P.cols() + j];
            coff += P.cols();
        }
        std::vector<Var> owned(parts.begin(), parts.end());
        return make("concat_cols", owned, std::move(C), [owned](Tape& t, const Node& node) {
            std::size_t d = node.value.cols(), n = node.value.rows(), coff = 0;
            for (Var p : owned) {
                auto& dP = t.grad_buf(p);
                std::size_t pc = t.val(p).cols();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < pc; ++j)
                        dP[i * pc + j] += node.grad[i * d + coff + j];
                coff += pc;
            }
        });
    }

    Var concat_cols(std::initializer_list<Var> parts) {
        std::vector<Var> v(parts);
        return concat_cols(std::span<const Var>(v));
    }

    /// Rows [r0, r1).
    Var row_slice(Var a, std::size_t r0, std::size_t r1) {
        const Tensor& A = val(a);
        if (r0 > r1 || r1 > A.rows())
            throw IndexError("row_slice: [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ") out of " + std::to_string(A.rows()) + " rows");
        std::size_t d = A.cols();
        Tensor C({r1 - r0, d},
                 std::vector<double>(A.values.begin() + r0 * d, A.values.begin() + r1 * d));
        return make("row_slice", {a}, std::move(C), [a, r0, d](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            for (std::size_t i = 0; i < node.grad.size(); ++i) dA[r0 * d + i] += node.grad[i];
        });
    }

    /// Columns [c0, c1).
    Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
        const Tensor& A = val(a);
        if (c0 > c1 || c1 > A.cols())
            throw IndexError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") out of " + std::to_string(A.cols()) + " cols");
        std::size_t n = A.rows(), d = A.cols(), w = c1 - c0;
        Tensor C = Tensor::zeros(n, w);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) C.values[i * w + j] = A.values[i * d + c0 + j];
        return make("slice_cols", {a}, std::move(C), [a, c0, d, w](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            std::size_t n = node.value.rows();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    dA[i * d + c0 + j] += node.grad[i * w + j];
        });
    }

    Var sum(Var a) {
        const Tensor& A = val(a);
        double s = std::accumulate(A.values.begin(), A.values.end(), 0.0);
        flops_ += A.numel();
        return make("sum", {a}, Tensor::scalar(s), [a](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            for (auto& g : dA) g += node.grad[0];
        });
    }

    Var mean(Var a) {
        const Tensor& A = val(a);
        if (A.numel() == 0) throw ContractError("mean: empty tensor");
        double s = std::accumulate(A.values.begin(), A.values.end(), 0.0);
        double n = static_cast<double>(A.numel());
        flops_ += A.numel();
        return make("mean", {a}, Tensor::scalar(s / n), [a, n](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            for (auto& g : dA) g += node.grad[0] / n;
        });
    }

    /// Sum along each row: nxd -> nx1.
    Var row_sum(Var a) {
        const Tensor& A = val(a);
        std::size_t n = A.rows(), d = A.cols();
        Tensor C = Tensor::zeros(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += A.values[i * d + j];
            C.values[i] = s;
        }
        flops_ += A.numel();
        return make("row_sum", {a}, std::move(C), [a, d](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            std::size_t n = node.value.rows();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) dA[i * d + j] += node.grad[i];
        });
    }

    Var sigmoid(Var a) {
        Tensor C = val(a);
        C.requires_grad = false;
        C.grad.clear();
        for (auto& x : C.values) x = 1.0 / (1.0 + std::exp(-x));
        flops_ += 4 * C.numel();
        return make("sigmoid", {a}, std::move(C), [a](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                double y = node.value.values[i];
                dA[i] += node.grad[i] * y * (1.0 - y);
            }
        });
    }

    Var tanh(Var a) {
        Tensor C = val(a);
        C.requires_grad = false;
        C.grad.clear();
        for (auto& x : C.values) x = std::tanh(x);
        flops_ += 4 * C.numel();
        return make("tanh", {a}, std::move(C), [a](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                double y = node.value.values[i];
                dA[i] += node.grad[i] * (1.0 - y * y);
            }
        });
    }

    Var relu(Var a) {
        Tensor C = val(a);
        C.requires_grad = false;
        C.grad.clear();
        for (auto& x : C.values) x = x > 0.0 ? x : 0.0;
        flops_ += C.numel();
        return make("relu", {a}, std::move(C), [a](Tape& t, const Node& node) {
            const Tensor& A = t.val(a);
            auto& dA = t.grad_buf(a);
            for (std::size_t i = 0; i < node.grad.size(); ++i)
                if (A.values[i] > 0.0) dA[i] += node.grad[i];
        });
    }

    /// Softmax within each row (max-shifted for stability).
    Var row_softmax(Var a) {
        const Tensor& A = val(a);
        std::size_t n = A.rows(), d = A.cols();
        if (d == 0) throw ContractError("row_softmax: zero-width rows");
        Tensor C = Tensor::zeros(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            double mx = A.values[i * d];
            for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, A.values[i * d + j]);
            double z = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double e = std::exp(A.values[i * d + j] - mx);
                C.values[i * d + j] = e;
                z += e;
            }
            for (std::size_t j = 0; j < d; ++j) C.values[i * d + j] /= z;
        }
        flops_ += 6 * A.numel();
        return make("row_softmax", {a}, std::move(C), [a, d](Tape& t, const Node& node) {
            auto& dA = t.grad_buf(a);
            std::size_t n = node.value.rows();
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j)
                    dot += node.grad[i * d + j] * node.value.values[i * d + j];
                for (std::size_t j = 0; j < d; ++j) {
                    double y = node.value.values[i * d + j];
                    dA[i * d + j] += y * (node.grad[i * d + j] - dot);
                }
            }
        });
    }

    Var gather_rows(Var a, std::vector<std::size_t> idx) {
        const Tensor& A = val(a);
        std::size_t d = A.cols();
        for (auto r : idx)
            if (r >= A.rows())
                throw IndexError("gather_rows: index " + std::to_string(r) + " out of " +
                                 std::to_string(A.rows()) + " rows");
        Tensor C = Tensor::zeros(idx.size(), d);
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy(A.values.begin() + idx[i] * d, A.values.begin() + (idx[i] + 1) * d,
                      C.values.begin() + i * d);
        flops_ += idx.size() * d;
        return make("gather_rows", {a}, std::move(C),
                    [a, idx = std::move(idx), d](Tape& t, const Node& node) {
                        auto& dA = t.grad_buf(a);
                        for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t j = 0; j < d; ++j)
                                dA[idx[i] * d + j] += node.grad[i * d + j];
                    });
    }

    /// out has `out_rows` rows; row idx[i] accumulates input row i.
    Var scatter_add_rows(Var a, std::vector<std::size_t> idx, std::size_t out_rows) {
        const Tensor& A = val(a);
        if (idx.size() != A.rows())
            throw DimensionError("scatter_add_rows: " + std::to_string(idx.size()) +
                                 " indices for " + std::to_string(A.rows()) + " rows");
        for (auto r : idx)
            if (r >= out_rows)
                throw IndexError("scatter_add_rows: index " + std::to_string(r) + " out of " +
                                 std::to_string(out_rows) + " rows");
        std::size_t d = A.cols();
        Tensor C = Tensor::zeros(out_rows, d);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < d; ++j)
                C.values[idx[i] * d + j] += A.values[i * d + j];
        flops_ += idx.size() * d;
        return make("scatter_add_rows", {a}, std::move(C),
                    [a, idx = std::move(idx), d](Tape& t, const Node& node) {
                        auto& dA = t.grad_buf(a);
                        for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t j = 0; j < d; ++j)
                                dA[i * d + j] += node.grad[idx[i] * d + j];
                    });
    }

    /// Mean binary cross-entropy of probabilities against fixed 0/1 labels.
    /// Probabilities are clamped to [1e-12, 1-1e-12]; clamped entries get
    /// zero gradient (standard clamp semantics), so the loss is never NaN.
    Var bce_loss(Var p, const std::vector<double>& labels) {
        const Tensor& P = val(p);
        if (P.numel() != labels.size())
            throw DimensionError("bce_loss: " + std::to_string(labels.size()) + " labels for " +
                                 std::to_string(P.numel()) + " scores");
        if (labels.empty()) throw ContractError("bce_loss: empty batch");
        double acc = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            double q = std::clamp(P.values[i], kBceEps, 1.0 - kBceEps);
            acc -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
        }
        double n = static_cast<double>(labels.size());
        flops_ += 8 * labels.size();
        return make("bce_loss", {p}, Tensor::scalar(acc / n),
                    [p, labels, n](Tape& t, const Node& node) {
                        const Tensor& P = t.val(p);
                        auto& dP = t.grad_buf(p);
                        for (std::size_t i = 0; i < labels.size(); ++i) {
                            double raw = P.values[i];
                            if (raw < kBceEps || raw > 1.0 - kBceEps) continue;
                            dP[i] += node.grad[0] * (raw - labels[i]) / (raw * (1.0 - raw) * n);
                        }
                    });
    }

    const Tensor& val(Var v) const { return nodes_.at(v.id).value; }

    std::size_t size() const { return nodes_.size(); }

    /// Estimated floating-point work recorded by the forward ops so far.
    std::uint64_t flops() const { return flops_; }

    /// Reverse sweep from a scalar loss. Internal grad buffers are reset
    /// first, so repeated calls accumulate identical contributions into the
    /// leased parameters' grads.
    void backward(Var loss) {
        const Tensor& L = val(loss);
        if (!L.is_scalar())
            throw ContractError("backward: loss must be scalar, got " + L.shape_str());
        for (auto& n : nodes_) n.grad.assign(n.value.numel(), 0.0);
        nodes_[loss.id].grad[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward && i <= loss.id) n.backward(*this, n);
        }
        for (auto& n : nodes_)
            if (n.leaf && n.leaf->requires_grad) {
                if (n.leaf->grad.size() != n.grad.size()) n.leaf->grad.assign(n.grad.size(), 0.0);
                for (std::size_t i = 0; i < n.grad.size(); ++i) n.leaf->grad[i] += n.grad[i];
            }
    }

private:
    struct Node {
        const char* op = "";
        std::vector<std::size_t> inputs;
        Tensor value;
        std::vector<double> grad;
        Tensor* leaf = nullptr;
        std::function<void(Tape&, const Node&)> backward;
    };

    static void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
        if (a.shape != b.shape)
            throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                 b.shape_str());
    }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    template <typename F>
    Var make(const char* op, std::vector<Var> inputs, Tensor value, F&& bw) {
        Node n;
        n.op = op;
        n.inputs.reserve(inputs.size());
        for (Var v : inputs) {
            if (!v.valid() || v.id >= nodes_.size())
                throw ContractError(std::string(op) + ": input from another tape");
            n.inputs.push_back(v.id);
        }
        n.value = std::move(value);
        n.backward = std::forward<F>(bw);
        return push(std::move(n));
    }

    std::vector<double>& grad_buf(Var v) { return nodes_[v.id].grad; }

    std::vector<Node> nodes_;
    std::uint64_t flops_ = 0;
};

}  // namespace durendal
