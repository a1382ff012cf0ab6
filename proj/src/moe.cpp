#include "omni/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "omni/errors.hpp"
#include "omni/json_io.hpp"

namespace omni {

namespace {

constexpr std::array<Modality, kRoutedModalities> kRouted = {Modality::Text, Modality::Image, Modality::Audio};

std::size_t routed_index(Modality m) {
    if (m == Modality::Control) throw UnknownModalityError("control tokens are not routed");
    return static_cast<std::size_t>(m);
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
    if (m.rows != rows || m.cols != cols || m.data.size() != rows * cols) {
        throw ShapeMismatchError(what + " is " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                 ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

}  // namespace

MoeParams MoeParams::random(const MoeShape& shape, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    auto uniform = [&] { return -0.1 + 0.2 * (static_cast<double>(gen() >> 11) * 0x1.0p-53); };
    auto fill = [&](std::vector<double>& v) { std::generate(v.begin(), v.end(), uniform); };

    MoeParams p;
    p.shape = shape;
    for (auto& r : p.routers) {
        r = Matrix(shape.experts, shape.d);
        fill(r.data);
    }
    p.experts.resize(shape.experts);
    for (auto& e : p.experts) {
        e.w_in = Matrix(shape.inner, shape.d);
        e.b_in.resize(shape.inner);
        e.w_out = Matrix(shape.d, shape.inner);
        e.b_out.resize(shape.d);
        fill(e.w_in.data);
        fill(e.b_in);
        fill(e.w_out.data);
        fill(e.b_out);
    }
    p.validate();
    return p;
}

void MoeParams::validate() const {
    const auto& s = shape;
    if (s.d == 0 || s.experts == 0 || s.inner == 0) throw PreconditionError("MoE dimensions must be >= 1");
    if (s.top_k < 1 || s.top_k > s.experts) throw PreconditionError("top_k must be in [1, experts]");
    for (const auto m : kRouted) {
        expect_shape(routers[static_cast<std::size_t>(m)], s.experts, s.d,
                     std::string(to_string(m)) + " router");
    }
    if (experts.size() != s.experts) throw ShapeMismatchError("expert count mismatch");
    for (std::size_t i = 0; i < experts.size(); ++i) {
        const auto& e = experts[i];
        const auto tag = "expert " + std::to_string(i);
        expect_shape(e.w_in, s.inner, s.d, tag + " w_in");
        expect_shape(e.w_out, s.d, s.inner, tag + " w_out");
        if (e.b_in.size() != s.inner || e.b_out.size() != s.d) throw ShapeMismatchError(tag + " bias size mismatch");
    }
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    for (const auto& r : routers) {
        if (!finite(r.data)) throw PreconditionError("router holds non-finite values");
    }
    for (const auto& e : experts) {
        if (!finite(e.w_in.data) || !finite(e.b_in) || !finite(e.w_out.data) || !finite(e.b_out)) {
            throw PreconditionError("expert holds non-finite values");
        }
    }
}

std::vector<double> expert_forward(const ExpertWeights& expert, std::span<const double> x) {
    std::vector<double> hidden(expert.w_in.rows);
    for (std::size_t r = 0; r < hidden.size(); ++r) {
        const auto row = expert.w_in.row(r);
        hidden[r] = std::max(0.0, std::inner_product(row.begin(), row.end(), x.begin(), expert.b_in[r]));
    }
    std::vector<double> out(expert.w_out.rows);
    for (std::size_t r = 0; r < out.size(); ++r) {
        const auto row = expert.w_out.row(r);
        out[r] = std::inner_product(row.begin(), row.end(), hidden.begin(), expert.b_out[r]);
    }
    return out;
}

MoeLayer::MoeLayer(MoeParams params)
    : params_(std::move(params)),
      dispatch_(std::make_unique<std::atomic<std::uint64_t>[]>(kRoutedModalities * params_.shape.experts)),
      routed_(std::make_unique<std::atomic<std::uint64_t>[]>(kRoutedModalities)) {
    params_.validate();
    reset_stats();
}

GateDecision MoeLayer::route(std::span<const double> x, Modality modality) const {
    const std::size_t mi = routed_index(modality);
    const auto& s = params_.shape;
    if (x.size() != s.d) {
        throw ShapeMismatchError("input has " + std::to_string(x.size()) + " features, expected " +
                                 std::to_string(s.d));
    }
    const Matrix& router = params_.routers[mi];

    GateDecision g;
    g.modality = modality;
    g.logits.resize(s.experts);
    for (std::size_t e = 0; e < s.experts; ++e) {
        const auto row = router.row(e);
        g.logits[e] = std::inner_product(row.begin(), row.end(), x.begin(), 0.0);
    }
    const double peak = *std::max_element(g.logits.begin(), g.logits.end());
    g.probs.resize(s.experts);
    double total = 0.0;
    for (std::size_t e = 0; e < s.experts; ++e) {
        g.probs[e] = std::exp(g.logits[e] - peak);
        total += g.probs[e];
    }
    for (auto& p : g.probs) p /= total;

    std::vector<std::size_t> order(s.experts);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g.probs[a] > g.probs[b]; });
    g.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(s.top_k));

    double kept = 0.0;
    for (const auto e : g.selected) kept += g.probs[e];
    for (const auto e : g.selected) g.weights.push_back(g.probs[e] / kept);
    return g;
}

std::vector<double> MoeLayer::forward(std::span<const double> x, Modality modality) const {
    const auto gate = route(x, modality);
    const std::size_t mi = static_cast<std::size_t>(modality);
    std::vector<double> out(params_.shape.d, 0.0);
    for (std::size_t i = 0; i < gate.selected.size(); ++i) {
        const auto e = gate.selected[i];
        const auto y = expert_forward(params_.experts[e], x);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += gate.weights[i] * y[j];
        dispatch_[mi * params_.shape.experts + e].fetch_add(1, std::memory_order_relaxed);
    }
    routed_[mi].fetch_add(1, std::memory_order_relaxed);
    return out;
}

LoadStats MoeLayer::load_report() const {
    const std::size_t n = params_.shape.experts;
    LoadStats st;
    for (std::size_t m = 0; m < kRoutedModalities; ++m) {
        st.tokens[m] = routed_[m].load(std::memory_order_relaxed);
        st.counts[m].resize(n);
        std::uint64_t total = 0;
        for (std::size_t e = 0; e < n; ++e) {
            st.counts[m][e] = dispatch_[m * n + e].load(std::memory_order_relaxed);
            total += st.counts[m][e];
        }
        double h = 0.0;
        for (const auto c : st.counts[m]) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / static_cast<double>(total);
            h -= p * std::log(p);
        }
        st.entropy[m] = h;
    }
    return st;
}

void MoeLayer::reset_stats() {
    for (std::size_t i = 0; i < kRoutedModalities * params_.shape.experts; ++i) dispatch_[i].store(0);
    for (std::size_t i = 0; i < kRoutedModalities; ++i) routed_[i].store(0);
}

nlohmann::ordered_json to_json(const MoeParams& params) {
    nlohmann::ordered_json j;
    j["d"] = params.shape.d;
    j["experts"] = params.shape.experts;
    j["top_k"] = params.shape.top_k;
    j["inner"] = params.shape.inner;
    nlohmann::ordered_json routers;
    for (const auto m : kRouted) routers[std::string(to_string(m))] = params.routers[static_cast<std::size_t>(m)].data;
    j["routers"] = routers;
    auto experts = nlohmann::ordered_json::array();
    for (const auto& e : params.experts) {
        nlohmann::ordered_json ej;
        ej["w_in"] = e.w_in.data;
        ej["b_in"] = e.b_in;
        ej["w_out"] = e.w_out.data;
        ej["b_out"] = e.b_out;
        experts.push_back(ej);
    }
    j["expert_weights"] = experts;
    return j;
}

MoeParams moe_params_from_json(const nlohmann::json& j) {
    MoeParams p;
    p.shape.d = json_get<std::size_t>(j, "d");
    p.shape.experts = json_get<std::size_t>(j, "experts");
    p.shape.top_k = json_get<std::size_t>(j, "top_k");
    p.shape.inner = json_get<std::size_t>(j, "inner");
    const auto& s = p.shape;
    const auto routers = json_get<nlohmann::json>(j, "routers");
    for (const auto m : kRouted) {
        auto& r = p.routers[static_cast<std::size_t>(m)];
        r.rows = s.experts;
        r.cols = s.d;
        r.data = json_get<std::vector<double>>(routers, std::string(to_string(m)).c_str());
    }
    for (const auto& ej : json_get<nlohmann::json>(j, "expert_weights")) {
        ExpertWeights e;
        e.w_in.rows = s.inner;
        e.w_in.cols = s.d;
        e.w_in.data = json_get<std::vector<double>>(ej, "w_in");
        e.b_in = json_get<std::vector<double>>(ej, "b_in");
        e.w_out.rows = s.d;
        e.w_out.cols = s.inner;
        e.w_out.data = json_get<std::vector<double>>(ej, "w_out");
        e.b_out = json_get<std::vector<double>>(ej, "b_out");
        p.experts.push_back(std::move(e));
    }
    try {
        p.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("MoE checkpoint: ") + e.what());
    }
    return p;
}

nlohmann::ordered_json to_json(const LoadStats& stats) {
    nlohmann::ordered_json j;
    for (const auto m : kRouted) {
        const auto i = static_cast<std::size_t>(m);
        nlohmann::ordered_json mj;
        mj["tokens"] = stats.tokens[i];
        mj["counts"] = stats.counts[i];
        mj["entropy"] = stats.entropy[i];
        j[std::string(to_string(m))] = mj;
    }
    return j;
}

}  // namespace omni
