#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "icfsr/error.hpp"
#include "icfsr/layers.hpp"
#include "icfsr/resample.hpp"
#include "icfsr/rng.hpp"
#include "icfsr/tensor.hpp"

namespace icfsr {

/// Architecture of the scale-conditional network: a shared head and
/// residual body plus one up tail and one down tail per integer scale.
struct ModelConfig {
    int n_resblocks = 8;
    int n_channels = 32;
    std::vector<int> scale_set{2};
    int conv_kernel = 3;
    double residual_scaling = 1.0;

    void validate() const {
        detail::require(n_resblocks >= 0, "n_resblocks must be non-negative");
        detail::require(n_channels >= 1, "n_channels must be positive");
        detail::require(conv_kernel == 3, "conv_kernel is fixed at 3");
        detail::require(!scale_set.empty(), "scale_set must not be empty");
        for (std::size_t i = 0; i < scale_set.size(); ++i) {
            detail::require(scale_set[i] >= 2, "scales must be integers >= 2");
            if (i > 0)
                detail::require(scale_set[i] > scale_set[i - 1],
                                "scale_set must be strictly increasing");
        }
        detail::require(std::isfinite(residual_scaling), "residual_scaling must be finite");
    }

    [[nodiscard]] bool has_scale(int s) const {
        return std::find(scale_set.begin(), scale_set.end(), s) != scale_set.end();
    }
    [[nodiscard]] int max_scale() const { return scale_set.back(); }

    bool operator==(const ModelConfig&) const = default;
};

/// Resize condition s in {k, 1/k : k in scale_set} U {1}.
struct ScaleCondition {
    int num = 1;
    int den = 1;

    static ScaleCondition identity() { return {1, 1}; }
    static ScaleCondition up(int k) { return {k, 1}; }
    static ScaleCondition down(int k) { return {1, k}; }

    [[nodiscard]] bool is_identity() const { return num == den; }
    [[nodiscard]] bool is_up() const { return num > den; }
    /// The integer factor k of s = k or s = 1/k.
    [[nodiscard]] int factor() const { return is_up() ? num : den; }
    [[nodiscard]] double value() const { return static_cast<double>(num) / den; }
    [[nodiscard]] ScaleCondition inverse() const { return {den, num}; }
    [[nodiscard]] std::string str() const {
        return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
    }

    bool operator==(const ScaleCondition&) const = default;
};

template <class T>
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> values;

    bool operator==(const ParamTensor&) const = default;
};

/// Indices of one convolution's weight and bias inside a ParameterSet.
struct ConvSlot {
    std::size_t weight = 0;
    std::size_t bias = 0;
    int cin = 0;
    int cout = 0;
};

struct ResBlockSlots {
    ConvSlot conv1;
    ConvSlot conv2;
};

struct TailSlots {
    ConvSlot up_expand;  // C -> C*s^2, followed by pixel shuffle
    ConvSlot up_out;     // C -> 3 at the output resolution
    ConvSlot down_out;   // C*s^2 -> 3 after pixel unshuffle
};

struct ModelLayout {
    ConvSlot head;
    std::vector<ResBlockSlots> blocks;
    ConvSlot body_out;
    std::map<int, TailSlots> tails;
};

/// Named, shaped weights of the network. Gradients and optimizer moments
/// reuse the same type so that every buffer is shape-congruent.
template <class T>
class ParameterSet {
public:
    ParameterSet() = default;

    explicit ParameterSet(const ModelConfig& cfg) : config_(cfg) {
        cfg.validate();
        const int c = cfg.n_channels;
        layout_.head = add_conv("head", 3, c);
        for (int i = 0; i < cfg.n_resblocks; ++i) {
            const std::string p = "body." + std::to_string(i);
            ResBlockSlots b;
            b.conv1 = add_conv(p + ".conv1", c, c);
            b.conv2 = add_conv(p + ".conv2", c, c);
            layout_.blocks.push_back(b);
        }
        layout_.body_out = add_conv("body.out", c, c);
        for (int s : cfg.scale_set) {
            const std::string p = "tail.x" + std::to_string(s);
            TailSlots t;
            t.up_expand = add_conv(p + ".up.expand", c, c * s * s);
            t.up_out = add_conv(p + ".up.out", c, 3);
            t.down_out = add_conv(p + ".down.out", c * s * s, 3);
            layout_.tails[s] = t;
        }
    }

    [[nodiscard]] const ModelConfig& config() const { return config_; }
    [[nodiscard]] const ModelLayout& layout() const { return layout_; }
    [[nodiscard]] std::vector<ParamTensor<T>>& tensors() { return tensors_; }
    [[nodiscard]] const std::vector<ParamTensor<T>>& tensors() const { return tensors_; }

    [[nodiscard]] std::size_t num_values() const {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += t.values.size();
        return n;
    }

    [[nodiscard]] const ParamTensor<T>* find(const std::string& name) const {
        for (const auto& t : tensors_)
            if (t.name == name) return &t;
        return nullptr;
    }
    [[nodiscard]] ParamTensor<T>* find(const std::string& name) {
        for (auto& t : tensors_)
            if (t.name == name) return &t;
        return nullptr;
    }

    [[nodiscard]] layers::ConvView<T> conv(const ConvSlot& s) const {
        return {tensors_[s.weight].values, tensors_[s.bias].values, s.cin, s.cout,
                config_.conv_kernel};
    }
    [[nodiscard]] layers::ConvGrad<T> conv_grad(const ConvSlot& s) {
        return {tensors_[s.weight].values, tensors_[s.bias].values};
    }

    void set_zero() {
        for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), T(0));
    }

    /// this += scale * other
    void add_scaled(const ParameterSet& other, T scale) {
        for (std::size_t i = 0; i < tensors_.size(); ++i) {
            auto& a = tensors_[i].values;
            const auto& b = other.tensors_[i].values;
            for (std::size_t j = 0; j < a.size(); ++j) a[j] += scale * b[j];
        }
    }

    [[nodiscard]] bool all_finite() const {
        for (const auto& t : tensors_)
            for (T v : t.values)
                if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const ParameterSet& o) const {
        return config_ == o.config_ && tensors_ == o.tensors_;
    }

private:
    ConvSlot add_conv(const std::string& name, int cin, int cout) {
        const int k = config_.conv_kernel;
        ConvSlot s;
        s.cin = cin;
        s.cout = cout;
        s.weight = tensors_.size();
        tensors_.push_back({name + ".weight", {cout, cin, k, k},
                            std::vector<T>(static_cast<std::size_t>(cout) * cin * k * k, T(0))});
        s.bias = tensors_.size();
        tensors_.push_back({name + ".bias", {cout}, std::vector<T>(cout, T(0))});
        return s;
    }

    ModelConfig config_;
    ModelLayout layout_;
    std::vector<ParamTensor<T>> tensors_;
};

template <class T>
using Gradients = ParameterSet<T>;

/// Weights uniform in +-1/sqrt(fan_in) (fan_in = cin*k*k), biases zero.
/// Draws are taken in tensor order from one Rng seeded with `seed`.
template <class T>
ParameterSet<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
    ParameterSet<T> p(cfg);
    Rng rng(seed);
    for (auto& t : p.tensors()) {
        if (t.shape.size() != 4) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape[1] * t.shape[2] * t.shape[3]));
        for (auto& v : t.values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    return p;
}

/// Activations recorded by forward_train for the reverse pass.
template <class T>
struct Tape {
    ScaleCondition scale;
    Tensor<T> input;
    Tensor<T> head_out;
    std::vector<Tensor<T>> block_in;
    std::vector<Tensor<T>> block_mid;  // relu(conv1(block_in))
    Tensor<T> body_last;               // input of body.out
    Tensor<T> features;                // body output incl. global skip
    Tensor<T> tail_mid;                // shuffled (up) or unshuffled (down) features
};

template <class T>
struct ForwardResult {
    Tensor<T> output;
    Tape<T> tape;
};

namespace detail {

inline void check_condition(const ModelConfig& cfg, ScaleCondition s, int h, int w) {
    if (s.is_identity()) return;
    require(s.num == 1 || s.den == 1, "scale condition must be k or 1/k, got " + s.str());
    require(cfg.has_scale(s.factor()), "scale " + s.str() + " is outside the configured set");
    if (!s.is_up())
        require(h % s.factor() == 0 && w % s.factor() == 0,
                "input " + dims_string(h, w) + " not divisible by " + std::to_string(s.factor()));
}

template <class T>
Tensor<T> resize_skip(const Tensor<T>& x, ScaleCondition s) {
    const int h = s.is_up() ? x.height * s.factor() : x.height / s.factor();
    const int w = s.is_up() ? x.width * s.factor() : x.width / s.factor();
    return apply_separable(x, cubic_table(x.height, h), cubic_table(x.width, w));
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b, T scale = T(1)) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += scale * b.data[i];
}

template <class T>
ForwardResult<T> run_forward(const ParameterSet<T>& p, const Tensor<T>& x, ScaleCondition s,
                             bool record) {
    const auto& cfg = p.config();
    require(x.channels == 3, "network input must have 3 channels");
    check_condition(cfg, s, x.height, x.width);
    ForwardResult<T> r;
    r.tape.scale = s;
    if (s.is_identity()) {
        r.output = x;
        return r;
    }
    const auto& L = p.layout();
    layers::RowMatrix<T> scratch;
    const T res_scale = static_cast<T>(cfg.residual_scaling);

    Tensor<T> head = layers::conv_forward(p.conv(L.head), x, scratch);
    Tensor<T> cur = head;
    for (const auto& blk : L.blocks) {
        Tensor<T> mid = layers::conv_forward(p.conv(blk.conv1), cur, scratch);
        layers::relu_inplace(mid);
        Tensor<T> res = layers::conv_forward(p.conv(blk.conv2), mid, scratch);
        Tensor<T> next = cur;
        add_inplace(next, res, res_scale);
        if (record) {
            r.tape.block_in.push_back(std::move(cur));
            r.tape.block_mid.push_back(std::move(mid));
        }
        cur = std::move(next);
    }
    Tensor<T> feat = layers::conv_forward(p.conv(L.body_out), cur, scratch);
    add_inplace(feat, head);

    const TailSlots& tail = L.tails.at(s.factor());
    Tensor<T> mid;
    Tensor<T> out;
    if (s.is_up()) {
        mid = pixel_shuffle(layers::conv_forward(p.conv(tail.up_expand), feat, scratch), s.factor());
        out = layers::conv_forward(p.conv(tail.up_out), mid, scratch);
    } else {
        mid = pixel_unshuffle(feat, s.factor());
        out = layers::conv_forward(p.conv(tail.down_out), mid, scratch);
    }
    add_inplace(out, resize_skip(x, s));

    if (record) {
        r.tape.input = x;
        r.tape.head_out = std::move(head);
        r.tape.body_last = std::move(cur);
        r.tape.features = std::move(feat);
        r.tape.tail_mid = std::move(mid);
    }
    r.output = std::move(out);
    return r;
}

}  // namespace detail

/// f(x | s). s = 1 returns x unchanged; otherwise the tail residual is added
/// to a bicubic resize of x by s.
template <class T, class U>
Tensor<U> forward(const ParameterSet<T>& params, const Tensor<U>& x, ScaleCondition s) {
    if constexpr (std::is_same_v<T, U>) {
        return detail::run_forward(params, x, s, false).output;
    } else {
        if (s.is_identity()) {
            detail::check_condition(params.config(), s, x.height, x.width);
            return x;
        }
        return tensor_cast<U>(detail::run_forward(params, tensor_cast<T>(x), s, false).output);
    }
}

/// forward plus the activations needed by backward().
template <class T>
ForwardResult<T> forward_train(const ParameterSet<T>& params, const Tensor<T>& x, ScaleCondition s) {
    return detail::run_forward(params, x, s, true);
}

/// Reverse pass through a recorded forward. Parameter gradients are
/// accumulated into `grads`; the input gradient is written to `grad_input`
/// when it is non-null.
template <class T>
void backward(const ParameterSet<T>& p, const Tape<T>& tape, const Tensor<T>& grad_output,
              Gradients<T>& grads, Tensor<T>* grad_input = nullptr) {
    const ScaleCondition s = tape.scale;
    if (s.is_identity()) {
        if (grad_input) *grad_input = grad_output;
        return;
    }
    const auto& L = p.layout();
    const T res_scale = static_cast<T>(p.config().residual_scaling);
    layers::RowMatrix<T> scratch;
    const TailSlots& tail = L.tails.at(s.factor());

    Tensor<T> g_feat;
    if (s.is_up()) {
        Tensor<T> g_mid = layers::conv_backward(p.conv(tail.up_out), tape.tail_mid, grad_output,
                                                grads.conv_grad(tail.up_out), true, scratch);
        Tensor<T> g_exp = pixel_unshuffle(g_mid, s.factor());
        g_feat = layers::conv_backward(p.conv(tail.up_expand), tape.features, g_exp,
                                       grads.conv_grad(tail.up_expand), true, scratch);
    } else {
        Tensor<T> g_mid = layers::conv_backward(p.conv(tail.down_out), tape.tail_mid, grad_output,
                                                grads.conv_grad(tail.down_out), true, scratch);
        g_feat = pixel_shuffle(g_mid, s.factor());
    }

    Tensor<T> g_head = g_feat;  // global skip around the body
    Tensor<T> g_cur = layers::conv_backward(p.conv(L.body_out), tape.body_last, g_feat,
                                            grads.conv_grad(L.body_out), true, scratch);
    for (std::size_t i = L.blocks.size(); i-- > 0;) {
        const auto& blk = L.blocks[i];
        Tensor<T> g_res = g_cur;
        if (res_scale != T(1))
            for (auto& v : g_res.data) v *= res_scale;
        Tensor<T> g_mid = layers::conv_backward(p.conv(blk.conv2), tape.block_mid[i], g_res,
                                                grads.conv_grad(blk.conv2), true, scratch);
        layers::relu_backward_inplace(tape.block_mid[i], g_mid);
        Tensor<T> g_in = layers::conv_backward(p.conv(blk.conv1), tape.block_in[i], g_mid,
                                               grads.conv_grad(blk.conv1), true, scratch);
        detail::add_inplace(g_cur, g_in);
    }
    detail::add_inplace(g_head, g_cur);
    Tensor<T> g_x = layers::conv_backward(p.conv(L.head), tape.input, g_head,
                                          grads.conv_grad(L.head), grad_input != nullptr, scratch);
    if (grad_input) {
        const int h = tape.input.height, w = tape.input.width;
        const int oh = grad_output.height, ow = grad_output.width;
        detail::add_inplace(g_x, apply_separable_adjoint(grad_output, cubic_table(h, oh),
                                                         cubic_table(w, ow)));
        *grad_input = std::move(g_x);
    }
}

/// Names of parameters touched when f runs with condition s.
template <class T>
std::vector<std::string> parameters_used_by(const ParameterSet<T>& p, ScaleCondition s) {
    std::vector<std::string> names;
    if (s.is_identity()) return names;
    const auto& L = p.layout();
    std::vector<ConvSlot> slots{L.head};
    for (const auto& b : L.blocks) {
        slots.push_back(b.conv1);
        slots.push_back(b.conv2);
    }
    slots.push_back(L.body_out);
    const auto& t = L.tails.at(s.factor());
    if (s.is_up()) {
        slots.push_back(t.up_expand);
        slots.push_back(t.up_out);
    } else {
        slots.push_back(t.down_out);
    }
    for (const auto& sl : slots) {
        names.push_back(p.tensors()[sl.weight].name);
        names.push_back(p.tensors()[sl.bias].name);
    }
    return names;
}

}  // namespace icfsr
