#pragma once

// Minimal from-scratch differentiable kernel: batch activations are Eigen
// matrices with one column per sample, feature order channel-major (c, h, w).
// Templated on the scalar so training can run in float while gradient audits
// run in double.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "survnn/errors.hpp"
#include "survnn/rng.hpp"

namespace survnn {

struct Shape {
    int c = 1, h = 1, w = 1;
    int size() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
class Layer {
  public:
    virtual ~Layer() = default;
    virtual std::string kind() const = 0;
    virtual Shape out_shape() const = 0;
    // Forward for a batch (one column per sample); caches what backward needs.
    virtual Mat<S> forward(const Mat<S>& x) = 0;
    virtual Mat<S> backward(const Mat<S>& dy) = 0;
    virtual void collect(std::vector<Mat<S>*>& params, std::vector<Mat<S>*>& grads) {
        (void)params;
        (void)grads;
    }
    // When false, backward may return an empty matrix instead of dL/dx; set on
    // the first layer of a model, whose input gradient nobody consumes.
    bool input_grad = true;
};

// ---------------------------------------------------------------------------

template <class S>
class Dense final : public Layer<S> {
  public:
    Dense(int in, int out) : in_(in), out_(out) {
        if (in <= 0 || out <= 0) throw ConfigError("dense dims must be positive");
        weight = Mat<S>::Zero(out, in);
        bias = Mat<S>::Zero(out, 1);
        dweight = Mat<S>::Zero(out, in);
        dbias = Mat<S>::Zero(out, 1);
    }
    std::string kind() const override { return "dense"; }
    Shape out_shape() const override { return {out_, 1, 1}; }

    Mat<S> forward(const Mat<S>& x) override {
        x_ = x;
        Mat<S> y = weight * x;
        y.colwise() += bias.col(0);
        return y;
    }
    Mat<S> backward(const Mat<S>& dy) override {
        if (x_.cols() != dy.cols()) throw ConfigError("dense backward without matching cache");
        dweight.noalias() += dy * x_.transpose();
        dbias.col(0) += dy.rowwise().sum();
        return weight.transpose() * dy;
    }
    void collect(std::vector<Mat<S>*>& p, std::vector<Mat<S>*>& g) override {
        p.push_back(&weight);
        p.push_back(&bias);
        g.push_back(&dweight);
        g.push_back(&dbias);
    }

    Mat<S> weight, bias, dweight, dbias;
    int fan_in() const { return in_; }

  private:
    int in_, out_;
    Mat<S> x_;
};

template <class S>
class Relu final : public Layer<S> {
  public:
    explicit Relu(Shape in) : shape_(in) {}
    std::string kind() const override { return "relu"; }
    Shape out_shape() const override { return shape_; }

    Mat<S> forward(const Mat<S>& x) override {
        mask_ = (x.array() > S(0)).template cast<S>();
        return x.cwiseMax(S(0));
    }
    Mat<S> backward(const Mat<S>& dy) override { return dy.cwiseProduct(mask_); }

  private:
    Shape shape_;
    Mat<S> mask_;
};

template <class S>
class Flatten final : public Layer<S> {
  public:
    explicit Flatten(Shape in) : shape_{in.size(), 1, 1} {}
    std::string kind() const override { return "flatten"; }
    Shape out_shape() const override { return shape_; }
    Mat<S> forward(const Mat<S>& x) override { return x; }   // layout already flat
    Mat<S> backward(const Mat<S>& dy) override { return dy; }

  private:
    Shape shape_;
};

template <class S>
class Conv2D final : public Layer<S> {
  public:
    enum class Padding { Same, Valid };

    Conv2D(Shape in, int filters, int ksize, Padding pad) : in_(in), filters_(filters), k_(ksize) {
        if (filters <= 0 || ksize <= 0) throw ConfigError("conv params must be positive");
        pad_ = pad == Padding::Same ? (ksize - 1) / 2 : 0;
        out_ = {filters, in.h + 2 * pad_ - ksize + 1, in.w + 2 * pad_ - ksize + 1};
        if (out_.h <= 0 || out_.w <= 0) throw ConfigError("conv output dims must be positive");
        const int kk = in.c * ksize * ksize;
        weight = Mat<S>::Zero(filters, kk);
        bias = Mat<S>::Zero(filters, 1);
        dweight = Mat<S>::Zero(filters, kk);
        dbias = Mat<S>::Zero(filters, 1);
    }
    std::string kind() const override { return "conv2d"; }
    Shape out_shape() const override { return out_; }

    Mat<S> forward(const Mat<S>& x) override {
        const Eigen::Index batch = x.cols();
        const int hw = out_.h * out_.w;
        im2col(x);
        Mat<S> y(static_cast<Eigen::Index>(filters_) * hw, batch);
        Mat<S> gemm = weight * cols_;    // filters x (hw * batch)
        for (Eigen::Index s = 0; s < batch; ++s) {
            // (pix, f) layout of the output column is the transpose of the
            // (f, pix) gemm block.
            Eigen::Map<Mat<S>>(y.col(s).data(), hw, filters_) =
                gemm.middleCols(s * hw, hw).transpose();
            Eigen::Map<Mat<S>>(y.col(s).data(), hw, filters_).rowwise() +=
                bias.col(0).transpose();
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index batch = dy.cols();
        const int hw = out_.h * out_.w;
        if (cols_.cols() != batch * hw) throw ConfigError("conv backward without forward cache");
        Mat<S> dgemm(filters_, batch * hw);
        for (Eigen::Index s = 0; s < batch; ++s)
            dgemm.middleCols(s * hw, hw) =
                Eigen::Map<const Mat<S>>(dy.col(s).data(), hw, filters_).transpose();
        dweight.noalias() += dgemm * cols_.transpose();
        dbias.col(0) += dgemm.rowwise().sum();

        if (!this->input_grad) return Mat<S>();
        Mat<S> dcols = weight.transpose() * dgemm;
        return col2im(dcols, batch);
    }

    void collect(std::vector<Mat<S>*>& p, std::vector<Mat<S>*>& g) override {
        p.push_back(&weight);
        p.push_back(&bias);
        g.push_back(&dweight);
        g.push_back(&dbias);
    }

    Mat<S> weight, bias, dweight, dbias;
    int fan_in() const { return in_.c * k_ * k_; }

  private:
    void im2col(const Mat<S>& x) {
        const Eigen::Index batch = x.cols();
        const int hw = out_.h * out_.w;
        const int kk = in_.c * k_ * k_;
        cols_.resize(kk, batch * hw);
        for (Eigen::Index s = 0; s < batch; ++s) {
            const S* img = x.col(s).data();
            for (int oh = 0; oh < out_.h; ++oh)
                for (int ow = 0; ow < out_.w; ++ow) {
                    S* dst = cols_.col(s * hw + oh * out_.w + ow).data();
                    int r = 0;
                    for (int ch = 0; ch < in_.c; ++ch)
                        for (int kr = 0; kr < k_; ++kr) {
                            const int ir = oh - pad_ + kr;
                            for (int kc = 0; kc < k_; ++kc, ++r) {
                                const int ic = ow - pad_ + kc;
                                dst[r] = (ir >= 0 && ir < in_.h && ic >= 0 && ic < in_.w)
                                             ? img[ch * in_.h * in_.w + ir * in_.w + ic]
                                             : S(0);
                            }
                        }
                }
        }
    }

    Mat<S> col2im(const Mat<S>& dcols, Eigen::Index batch) const {
        const int hw = out_.h * out_.w;
        Mat<S> dx = Mat<S>::Zero(in_.size(), batch);
        for (Eigen::Index s = 0; s < batch; ++s) {
            S* img = dx.col(s).data();
            for (int oh = 0; oh < out_.h; ++oh)
                for (int ow = 0; ow < out_.w; ++ow) {
                    const S* src = dcols.col(s * hw + oh * out_.w + ow).data();
                    int r = 0;
                    for (int ch = 0; ch < in_.c; ++ch)
                        for (int kr = 0; kr < k_; ++kr) {
                            const int ir = oh - pad_ + kr;
                            for (int kc = 0; kc < k_; ++kc, ++r) {
                                const int ic = ow - pad_ + kc;
                                if (ir >= 0 && ir < in_.h && ic >= 0 && ic < in_.w)
                                    img[ch * in_.h * in_.w + ir * in_.w + ic] += src[r];
                            }
                        }
                }
        }
        return dx;
    }

    Shape in_, out_;
    int filters_, k_, pad_;
    Mat<S> cols_;
};

template <class S>
class MaxPool2D final : public Layer<S> {
  public:
    MaxPool2D(Shape in, int ksize = 2, int stride = 2) : in_(in), k_(ksize), stride_(stride) {
        if (ksize <= 0 || stride <= 0) throw ConfigError("pool params must be positive");
        out_ = {in.c, (in.h - ksize) / stride + 1, (in.w - ksize) / stride + 1};
        if (out_.h <= 0 || out_.w <= 0) throw ConfigError("pool output dims must be positive");
    }
    std::string kind() const override { return "maxpool2d"; }
    Shape out_shape() const override { return out_; }

    Mat<S> forward(const Mat<S>& x) override {
        const Eigen::Index batch = x.cols();
        y_.resize(out_.size(), batch);
        argmax_.resize(out_.size(), batch);
        for (Eigen::Index s = 0; s < batch; ++s) {
            const S* img = x.col(s).data();
            for (int ch = 0; ch < out_.c; ++ch)
                for (int oh = 0; oh < out_.h; ++oh)
                    for (int ow = 0; ow < out_.w; ++ow) {
                        int best = -1;
                        S best_v = S(0);
                        for (int kr = 0; kr < k_; ++kr)
                            for (int kc = 0; kc < k_; ++kc) {
                                const int ir = oh * stride_ + kr;
                                const int ic = ow * stride_ + kc;
                                const int idx = ch * in_.h * in_.w + ir * in_.w + ic;
                                // First-scan tie break: strict > keeps the
                                // earliest maximizing element.
                                if (best < 0 || img[idx] > best_v) {
                                    best = idx;
                                    best_v = img[idx];
                                }
                            }
                        const int o = ch * out_.h * out_.w + oh * out_.w + ow;
                        y_(o, s) = best_v;
                        argmax_(o, s) = best;
                    }
        }
        return y_;
    }

    Mat<S> backward(const Mat<S>& dy) override {
        Mat<S> dx = Mat<S>::Zero(in_.size(), dy.cols());
        for (Eigen::Index s = 0; s < dy.cols(); ++s)
            for (int o = 0; o < out_.size(); ++o) dx(argmax_(o, s), s) += dy(o, s);
        return dx;
    }

  private:
    Shape in_, out_;
    int k_, stride_;
    Mat<S> y_;
    Eigen::MatrixXi argmax_;
};

// Table-5 style integration head: a shared dense 128->32 with ReLU applied to
// each of 5 crop features, max over the 32 hidden units per crop, and a final
// dense 5->1. Input is the 5 crop features flattened crop-major (5*128 rows).
template <class S>
class CropIntegrate final : public Layer<S> {
  public:
    CropIntegrate(int crops = 5, int in = 128, int hidden = 32)
        : crops_(crops), in_(in), hidden_(hidden) {
        if (crops <= 0 || in <= 0 || hidden <= 0)
            throw ConfigError("crop-integrate params must be positive");
        w1 = Mat<S>::Zero(hidden, in);
        b1 = Mat<S>::Zero(hidden, 1);
        w2 = Mat<S>::Zero(1, crops);
        b2 = Mat<S>::Zero(1, 1);
        dw1 = Mat<S>::Zero(hidden, in);
        db1 = Mat<S>::Zero(hidden, 1);
        dw2 = Mat<S>::Zero(1, crops);
        db2 = Mat<S>::Zero(1, 1);
    }
    std::string kind() const override { return "crop-integrate"; }
    Shape out_shape() const override { return {1, 1, 1}; }

    Mat<S> forward(const Mat<S>& x) override {
        if (x.rows() != static_cast<Eigen::Index>(crops_) * in_)
            throw ConfigError("crop-integrate expects " + std::to_string(crops_) + " crops of " +
                              std::to_string(in_) + " features, got " + std::to_string(x.rows()) +
                              " rows");
        const Eigen::Index batch = x.cols();
        x_ = x;
        hidden_act_.resize(static_cast<Eigen::Index>(crops_) * hidden_, batch);
        argmax_.resize(crops_, batch);
        maxvals_.resize(crops_, batch);
        for (Eigen::Index s = 0; s < batch; ++s)
            for (int cr = 0; cr < crops_; ++cr) {
                const auto xc = x.col(s).segment(static_cast<Eigen::Index>(cr) * in_, in_);
                Eigen::Matrix<S, Eigen::Dynamic, 1> h = (w1 * xc + b1.col(0)).cwiseMax(S(0));
                hidden_act_.col(s).segment(static_cast<Eigen::Index>(cr) * hidden_, hidden_) = h;
                Eigen::Index best;
                maxvals_(cr, s) = h.maxCoeff(&best);
                argmax_(cr, s) = static_cast<int>(best);
            }
        Mat<S> y = w2 * maxvals_;
        y.array() += b2(0, 0);
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index batch = dy.cols();
        Mat<S> dx = Mat<S>::Zero(static_cast<Eigen::Index>(crops_) * in_, batch);
        dw2.noalias() += dy * maxvals_.transpose();
        db2(0, 0) += dy.sum();
        const Mat<S> dmax = w2.transpose() * dy;    // crops x batch
        for (Eigen::Index s = 0; s < batch; ++s)
            for (int cr = 0; cr < crops_; ++cr) {
                const int unit = argmax_(cr, s);
                if (hidden_act_(static_cast<Eigen::Index>(cr) * hidden_ + unit, s) <= S(0) &&
                    maxvals_(cr, s) <= S(0))
                    continue;    // max landed on a clipped unit: zero gradient
                const S g = dmax(cr, s);
                const auto xc = x_.col(s).segment(static_cast<Eigen::Index>(cr) * in_, in_);
                dw1.row(unit) += g * xc.transpose();
                db1(unit, 0) += g;
                dx.col(s).segment(static_cast<Eigen::Index>(cr) * in_, in_) +=
                    g * w1.row(unit).transpose();
            }
        return dx;
    }

    void collect(std::vector<Mat<S>*>& p, std::vector<Mat<S>*>& g) override {
        p.push_back(&w1);
        p.push_back(&b1);
        p.push_back(&w2);
        p.push_back(&b2);
        g.push_back(&dw1);
        g.push_back(&db1);
        g.push_back(&dw2);
        g.push_back(&db2);
    }

    Mat<S> w1, b1, w2, b2, dw1, db1, dw2, db2;

  private:
    int crops_, in_, hidden_;
    Mat<S> x_, hidden_act_, maxvals_;
    Eigen::MatrixXi argmax_;
};

// ---------------------------------------------------------------------------

enum class ModelPreset { Table1, SimC, IntegrateHead };

inline std::string to_string(ModelPreset p) {
    switch (p) {
        case ModelPreset::Table1: return "table1";
        case ModelPreset::SimC: return "simc";
        case ModelPreset::IntegrateHead: return "integrate-head";
    }
    return "table1";
}

inline ModelPreset preset_from_string(const std::string& s) {
    if (s == "table1") return ModelPreset::Table1;
    if (s == "simc") return ModelPreset::SimC;
    if (s == "integrate-head") return ModelPreset::IntegrateHead;
    throw ConfigError("unknown model preset: " + s);
}

template <class S>
class Model {
  public:
    Shape input;
    std::vector<std::unique_ptr<Layer<S>>> layers;

    Shape out_shape() const { return layers.empty() ? input : layers.back()->out_shape(); }

    template <class L, class... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers.push_back(std::move(layer));
        return ref;
    }

    void params(std::vector<Mat<S>*>& p, std::vector<Mat<S>*>& g) {
        for (auto& l : layers) l->collect(p, g);
    }

    void zero_grads() {
        std::vector<Mat<S>*> p, g;
        params(p, g);
        for (auto* m : g) m->setZero();
    }

    // Fan-in-scaled uniform init (He-style), draws in double so float and
    // double instantiations see the same sequence for a given seed.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& l : layers) {
            std::vector<Mat<S>*> p, g;
            l->collect(p, g);
            if (p.empty()) continue;
            int fan_in = 0;
            if (auto* d = dynamic_cast<Dense<S>*>(l.get())) fan_in = d->fan_in();
            else if (auto* c = dynamic_cast<Conv2D<S>*>(l.get())) fan_in = c->fan_in();
            for (std::size_t k = 0; k < p.size(); ++k) {
                Mat<S>& m = *p[k];
                const bool is_bias = m.cols() == 1 && k % 2 == 1;
                if (is_bias) {
                    m.setZero();
                    continue;
                }
                const int fi = fan_in > 0 ? fan_in : static_cast<int>(m.cols());
                const double limit = std::sqrt(6.0 / fi);
                for (Eigen::Index j = 0; j < m.cols(); ++j)
                    for (Eigen::Index i = 0; i < m.rows(); ++i)
                        m(i, j) = static_cast<S>(rng.uniform(-limit, limit));
            }
        }
    }

    // Forward the batch, returning one scalar per sample as a double vector.
    Eigen::VectorXd forward(const Mat<S>& x) {
        if (x.rows() != input.size())
            throw ConfigError("model input has " + std::to_string(x.rows()) +
                              " features, expected " + input.str() + " = " +
                              std::to_string(input.size()));
        Mat<S> a = x;
        for (auto& l : layers) {
            a = l->forward(a);
            if (!a.allFinite()) throw NumericAbort("non-finite activation after " + l->kind());
        }
        if (a.rows() != 1) throw ConfigError("model must end in a scalar output per sample");
        return a.row(0).template cast<double>();
    }

    void backward(const Eigen::VectorXd& dLdf) {
        Mat<S> g = dLdf.transpose().template cast<S>();
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
            g = (*it)->backward(g);
            if (!g.allFinite()) throw NumericAbort("non-finite gradient in " + (*it)->kind());
        }
    }

    void sgd_step(double lr) {
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        std::vector<Mat<S>*> p, g;
        params(p, g);
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (p[k]->rows() != g[k]->rows() || p[k]->cols() != g[k]->cols())
                throw ConfigError("sgd_step: parameter/gradient shape mismatch");
            p[k]->noalias() -= static_cast<S>(lr) * (*g[k]);
        }
    }

    std::int64_t param_count() {
        std::vector<Mat<S>*> p, g;
        params(p, g);
        std::int64_t n = 0;
        for (auto* m : p) n += m->size();
        return n;
    }
};

namespace detail {
inline void expect_shape(const Shape& got, int h, int w, int c, const char* where) {
    if (got.h != h || got.w != w || got.c != c)
        throw ConfigError(std::string("preset shape mismatch at ") + where + ": got " + got.str());
}
}  // namespace detail

template <class S>
Model<S> build_model(ModelPreset preset) {
    Model<S> m;
    using Conv = Conv2D<S>;
    switch (preset) {
        case ModelPreset::Table1: {
            m.input = {1, 28, 28};
            auto& c1 = m.template add<Conv>(m.input, 32, 5, Conv::Padding::Same);
            detail::expect_shape(c1.out_shape(), 28, 28, 32, "conv1");
            m.template add<Relu<S>>(c1.out_shape());
            auto& p1 = m.template add<MaxPool2D<S>>(c1.out_shape());
            detail::expect_shape(p1.out_shape(), 14, 14, 32, "pool1");
            auto& c2 = m.template add<Conv>(p1.out_shape(), 64, 5, Conv::Padding::Same);
            detail::expect_shape(c2.out_shape(), 14, 14, 64, "conv2");
            m.template add<Relu<S>>(c2.out_shape());
            auto& p2 = m.template add<MaxPool2D<S>>(c2.out_shape());
            detail::expect_shape(p2.out_shape(), 7, 7, 64, "pool2");
            auto& fl = m.template add<Flatten<S>>(p2.out_shape());
            if (fl.out_shape().size() != 3136) throw ConfigError("table1 flatten must be 3136");
            m.template add<Dense<S>>(3136, 1024);
            m.template add<Relu<S>>(Shape{1024, 1, 1});
            m.template add<Dense<S>>(1024, 128);
            m.template add<Relu<S>>(Shape{128, 1, 1});
            m.template add<Dense<S>>(128, 1);
            break;
        }
        case ModelPreset::SimC: {
            // 32x32x3 input; the first convolution is valid-padded so the
            // feature maps match the printed 28x28x32 -> ... -> 3136 chain.
            m.input = {3, 32, 32};
            auto& c1 = m.template add<Conv>(m.input, 32, 5, Conv::Padding::Valid);
            detail::expect_shape(c1.out_shape(), 28, 28, 32, "conv1");
            m.template add<Relu<S>>(c1.out_shape());
            auto& p1 = m.template add<MaxPool2D<S>>(c1.out_shape());
            detail::expect_shape(p1.out_shape(), 14, 14, 32, "pool1");
            auto& c2 = m.template add<Conv>(p1.out_shape(), 64, 5, Conv::Padding::Same);
            detail::expect_shape(c2.out_shape(), 14, 14, 64, "conv2");
            m.template add<Relu<S>>(c2.out_shape());
            auto& p2 = m.template add<MaxPool2D<S>>(c2.out_shape());
            detail::expect_shape(p2.out_shape(), 7, 7, 64, "pool2");
            auto& fl = m.template add<Flatten<S>>(p2.out_shape());
            if (fl.out_shape().size() != 3136) throw ConfigError("simc flatten must be 3136");
            m.template add<Dense<S>>(3136, 100);
            m.template add<Relu<S>>(Shape{100, 1, 1});
            m.template add<Dense<S>>(100, 10);
            m.template add<Relu<S>>(Shape{10, 1, 1});
            m.template add<Dense<S>>(10, 1);
            break;
        }
        case ModelPreset::IntegrateHead: {
            m.input = {5, 1, 128};   // 5 crops of 128 features, crop-major
            m.template add<CropIntegrate<S>>(5, 128, 32);
            break;
        }
    }
    if (!m.layers.empty()) m.layers.front()->input_grad = false;
    return m;
}

// ---------------------------------------------------------------------------
// Checkpoints: "SNNW" magic, version, layer kinds, tensor shapes, all values
// as little-endian doubles, FNV-1a checksum trailer. Loading requires the
// receiving model to have the same layer kinds and tensor shapes.

namespace detail {

struct Fnv1a {
    std::uint64_t h = 1469598103934665603ULL;
    void feed(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
    }
};

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, Model<S>& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    detail::Fnv1a sum;
    auto put = [&](const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        sum.feed(p, n);
    };
    auto put_u32 = [&](std::uint32_t v) { put(&v, 4); };

    put("SNNW", 4);
    put_u32(1);    // version
    put_u32(static_cast<std::uint32_t>(model.layers.size()));
    for (auto& l : model.layers) {
        const std::string k = l->kind();
        put_u32(static_cast<std::uint32_t>(k.size()));
        put(k.data(), k.size());
    }
    std::vector<Mat<S>*> p, g;
    model.params(p, g);
    put_u32(static_cast<std::uint32_t>(p.size()));
    for (auto* m : p) {
        put_u32(static_cast<std::uint32_t>(m->rows()));
        put_u32(static_cast<std::uint32_t>(m->cols()));
        for (Eigen::Index i = 0; i < m->size(); ++i) {
            const double v = static_cast<double>(m->data()[i]);
            put(&v, 8);
        }
    }
    const std::uint64_t digest = sum.h;
    out.write(reinterpret_cast<const char*>(&digest), 8);
    if (!out) throw IoError("short write to checkpoint: " + path);
}

template <class S>
void load_checkpoint(const std::string& path, Model<S>& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    detail::Fnv1a sum;
    auto get = [&](void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in) throw IoError("truncated checkpoint: " + path);
        sum.feed(p, n);
    };
    auto get_u32 = [&] {
        std::uint32_t v;
        get(&v, 4);
        return v;
    };

    char magic[4];
    get(magic, 4);
    if (std::string(magic, 4) != "SNNW") throw IoError("bad checkpoint magic in " + path);
    if (get_u32() != 1) throw IoError("unsupported checkpoint version in " + path);
    if (get_u32() != model.layers.size())
        throw IoError("checkpoint layer count does not match model: " + path);
    for (auto& l : model.layers) {
        std::string k(get_u32(), '\0');
        get(k.data(), k.size());
        if (k != l->kind())
            throw IoError("checkpoint layer kind " + k + " does not match model layer " +
                          l->kind());
    }
    std::vector<Mat<S>*> p, g;
    model.params(p, g);
    if (get_u32() != p.size()) throw IoError("checkpoint tensor count does not match model");
    for (auto* m : p) {
        const std::uint32_t rows = get_u32(), cols = get_u32();
        if (rows != m->rows() || cols != m->cols())
            throw IoError("checkpoint tensor shape mismatch in " + path);
        for (Eigen::Index i = 0; i < m->size(); ++i) {
            double v;
            get(&v, 8);
            m->data()[i] = static_cast<S>(v);
        }
    }
    const std::uint64_t expect = sum.h;
    std::uint64_t digest;
    in.read(reinterpret_cast<char*>(&digest), 8);
    if (!in) throw IoError("truncated checkpoint: " + path);
    if (digest != expect) throw IoError("checkpoint checksum mismatch in " + path);
}

}  // namespace survnn
