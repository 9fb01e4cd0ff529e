#include "pzero/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pzero/error.hpp"

namespace pzero::policy {

namespace {

void matvec_add(const Matrix& m, std::span<const double> x, std::span<double> out)
{
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.data.data() + r * m.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) {
            acc += row[c] * x[c];
        }
        out[r] += acc;
    }
}

nlohmann::json matrix_json(const Matrix& m)
{
    return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from(const nlohmann::json& j, std::size_t rows, std::size_t cols, const char* name)
{
    Matrix m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = j.at("data").get<std::vector<double>>();
    require(m.rows == rows && m.cols == cols && m.data.size() == rows * cols, ErrorKind::io,
            std::string("checkpoint matrix ") + name + " has the wrong shape");
    return m;
}

}  // namespace

std::size_t feature_count(std::size_t length)
{
    return length < 3 ? 0 : (length - 1) * (length - 2) / 2;
}

PolicyParams PolicyParams::zeros(const Alphabet& alphabet, const Dimensions& dims)
{
    require(dims.alphabet == alphabet.size(), ErrorKind::config, "alphabet size does not match dimensions");
    require(dims.hidden > 0 && dims.embedding > 0, ErrorKind::config, "hidden and embedding sizes must be positive");
    PolicyParams p;
    p.alphabet = alphabet;
    p.dims = dims;
    p.token_embedding = Matrix(dims.alphabet, dims.embedding);
    p.condition_projection = Matrix(dims.features, dims.context);
    p.input_weights = Matrix(dims.hidden, dims.embedding + dims.context);
    p.recurrent_weights = Matrix(dims.hidden, dims.hidden);
    p.bias.assign(dims.hidden, 0.0);
    p.output_projection = Matrix(dims.hidden, dims.alphabet);
    return p;
}

PolicyParams PolicyParams::random(const Alphabet& alphabet, const Dimensions& dims, std::uint64_t seed,
                                  double scale)
{
    auto p = zeros(alphabet, dims);
    p.seed = seed;
    Rng rng(seed);
    p.for_each([&](double& v) { v = rng.uniform(-scale, scale); });
    return p;
}

std::size_t PolicyParams::size() const noexcept
{
    std::size_t n = 0;
    for_each([&](const double&) { ++n; });
    return n;
}

void PolicyParams::axpy(double a, const PolicyParams& x)
{
    check_compatible(x);
    std::vector<const double*> src;
    src.reserve(size());
    x.for_each([&](const double& v) { src.push_back(&v); });
    std::size_t k = 0;
    for_each([&](double& v) { v += a * *src[k++]; });
}

void PolicyParams::scale(double a)
{
    for_each([&](double& v) { v *= a; });
}

double PolicyParams::dot(const PolicyParams& other) const
{
    check_compatible(other);
    std::vector<double> values;
    values.reserve(size());
    other.for_each([&](const double& v) { values.push_back(v); });
    double acc = 0.0;
    std::size_t k = 0;
    for_each([&](const double& v) { acc += v * values[k++]; });
    return acc;
}

bool PolicyParams::all_finite() const
{
    bool ok = true;
    for_each([&](const double& v) { ok = ok && std::isfinite(v); });
    return ok;
}

void PolicyParams::check_compatible(const PolicyParams& other) const
{
    require(dims == other.dims && alphabet == other.alphabet, ErrorKind::config,
            "policy architectures differ");
}

Condition Condition::of(const lattice::BackboneTarget& target)
{
    const auto n = target.length();
    Condition c;
    c.features.assign(feature_count(n), 0.0);
    for (auto [i, j] : target.contact_map()) {
        // row-major over pairs (i, j) with j >= i + 2
        std::size_t index = 0;
        for (std::size_t r = 0; r < i; ++r) {
            index += n - r - 2;
        }
        index += j - i - 2;
        c.features[index] = 1.0;
    }
    return c;
}

std::vector<double> encode_condition(const PolicyParams& params, const Condition& cond)
{
    std::vector<double> ctx(params.dims.context, 0.0);
    if (cond.masked) {
        return ctx;
    }
    require(cond.features.size() == params.dims.features, ErrorKind::config,
            "condition has " + std::to_string(cond.features.size()) + " features, policy expects " +
                std::to_string(params.dims.features));
    const auto& proj = params.condition_projection;
    for (std::size_t f = 0; f < proj.rows; ++f) {
        if (cond.features[f] == 0.0) {
            continue;
        }
        for (std::size_t c = 0; c < proj.cols; ++c) {
            ctx[c] += cond.features[f] * proj(f, c);
        }
    }
    return ctx;
}

std::vector<double> encode_condition(const PolicyParams& params, const lattice::BackboneTarget& target)
{
    return encode_condition(params, Condition::of(target));
}

namespace {

// One recurrent step: fills inputs[t], hidden[t] from the previous state.
void step(const PolicyParams& p, Tape& tape, std::size_t t, const Token* previous)
{
    const auto& d = p.dims;
    auto& x = tape.inputs[t];
    x.assign(d.embedding + d.context, 0.0);
    if (previous != nullptr) {
        for (std::size_t e = 0; e < d.embedding; ++e) {
            x[e] = p.token_embedding(*previous, e);
        }
    }
    std::copy(tape.context.begin(), tape.context.end(), x.begin() + static_cast<std::ptrdiff_t>(d.embedding));
    std::vector<double> a(p.bias);
    matvec_add(p.input_weights, x, a);
    if (t > 0) {
        matvec_add(p.recurrent_weights, tape.hidden[t - 1], a);
    }
    for (auto& v : a) {
        v = std::tanh(v);
    }
    tape.hidden[t] = std::move(a);
}

std::vector<double> output_logits(const PolicyParams& p, std::span<const double> h)
{
    std::vector<double> z(p.dims.alphabet, 0.0);
    for (std::size_t k = 0; k < p.dims.hidden; ++k) {
        for (std::size_t a = 0; a < p.dims.alphabet; ++a) {
            z[a] += h[k] * p.output_projection(k, a);
        }
    }
    return z;
}

Tape start_tape(const PolicyParams& params, const Condition& cond, std::size_t length)
{
    Tape tape;
    tape.length = length;
    tape.condition = cond;
    tape.context = encode_condition(params, cond);
    tape.inputs.resize(length + 1);
    tape.hidden.resize(length + 1);
    tape.logits.resize(length);
    return tape;
}

}  // namespace

Tape forward(const PolicyParams& params, const Condition& cond, const Sequence& y)
{
    validate(y, params.alphabet);
    require(!y.tokens.empty(), ErrorKind::input, "empty sequence");
    auto tape = start_tape(params, cond, y.size());
    tape.tokens = y.tokens;
    for (std::size_t t = 0; t <= y.size(); ++t) {
        step(params, tape, t, t == 0 ? nullptr : &y.tokens[t - 1]);
        if (t < y.size()) {
            tape.logits[t] = output_logits(params, tape.hidden[t]);
        }
    }
    return tape;
}

std::vector<double> softmax(std::span<const double> logits)
{
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t a = 0; a < logits.size(); ++a) {
        p[a] = std::exp(logits[a] - top);
        sum += p[a];
    }
    for (auto& v : p) {
        v /= sum;
    }
    return p;
}

std::vector<double> log_softmax(std::span<const double> logits)
{
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto v : logits) {
        sum += std::exp(v - top);
    }
    const double lse = top + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t a = 0; a < logits.size(); ++a) {
        out[a] = logits[a] - lse;
    }
    return out;
}

LogProb log_prob(const PolicyParams& params, const Condition& cond, const Sequence& y)
{
    const auto tape = forward(params, cond, y);
    LogProb out;
    out.per_token.resize(y.size());
    for (std::size_t t = 0; t < y.size(); ++t) {
        out.per_token[t] = log_softmax(tape.logits[t])[y[t]];
        out.total += out.per_token[t];
        const auto h = tape.token_state(t);
        out.hidden.emplace_back(h.begin(), h.end());
    }
    return out;
}

LogProb log_prob(const PolicyParams& params, const lattice::BackboneTarget& target, const Sequence& y)
{
    require(y.size() == target.length(), ErrorKind::input, "sequence length does not match target");
    return log_prob(params, Condition::of(target), y);
}

void Sampler::validate() const
{
    require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::config, "temperature must be positive");
    require(top_p > 0.0 && top_p <= 1.0, ErrorKind::config, "nucleus p must lie in (0, 1]");
}

std::vector<double> sampling_distribution(std::span<const double> logits, const Sampler& sampler)
{
    std::vector<double> scaled(logits.begin(), logits.end());
    for (auto& v : scaled) {
        v /= sampler.temperature;
    }
    auto p = softmax(scaled);
    if (sampler.top_p >= 1.0) {
        return p;
    }
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] > p[b]; });
    std::vector<double> kept(p.size(), 0.0);
    double cumulative = 0.0;
    for (auto a : order) {
        kept[a] = p[a];
        cumulative += p[a];
        if (cumulative >= sampler.top_p) {
            break;
        }
    }
    for (auto& v : kept) {
        v /= cumulative;
    }
    return kept;
}

double RolloutRecord::total_logprob() const
{
    return std::accumulate(token_logprob.begin(), token_logprob.end(), 0.0);
}

std::vector<double> pooled_embedding(std::span<const std::vector<double>> hidden, std::span<const double> mask)
{
    require(!hidden.empty() && hidden.size() == mask.size(), ErrorKind::usage, "embedding needs matching states and mask");
    std::vector<double> z(hidden.front().size(), 0.0);
    double weight = 0.0;
    for (std::size_t t = 0; t < hidden.size(); ++t) {
        if (mask[t] == 0.0) {
            continue;
        }
        weight += mask[t];
        for (std::size_t k = 0; k < z.size(); ++k) {
            z[k] += mask[t] * hidden[t][k];
        }
    }
    require(weight > 0.0, ErrorKind::usage, "embedding mask is empty");
    double norm = 0.0;
    for (auto& v : z) {
        v /= weight;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    require(norm > 0.0, ErrorKind::domain, "pooled embedding has zero norm");
    for (auto& v : z) {
        v /= norm;
    }
    return z;
}

std::vector<std::vector<double>> pooled_embedding_backward(std::span<const std::vector<double>> hidden,
                                                           std::span<const double> mask,
                                                           std::span<const double> dz)
{
    const std::size_t d = hidden.front().size();
    std::vector<double> s(d, 0.0);
    double weight = 0.0;
    for (std::size_t t = 0; t < hidden.size(); ++t) {
        weight += mask[t];
        for (std::size_t k = 0; k < d; ++k) {
            s[k] += mask[t] * hidden[t][k];
        }
    }
    double norm = 0.0;
    for (auto& v : s) {
        v /= weight;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    // z = s / |s|  =>  ds = (dz - z (z . dz)) / |s|
    double z_dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        z_dot += s[k] / norm * dz[k];
    }
    std::vector<double> ds(d);
    for (std::size_t k = 0; k < d; ++k) {
        ds[k] = (dz[k] - s[k] / norm * z_dot) / norm;
    }
    std::vector<std::vector<double>> out(hidden.size(), std::vector<double>(d, 0.0));
    for (std::size_t t = 0; t < hidden.size(); ++t) {
        if (mask[t] == 0.0) {
            continue;
        }
        for (std::size_t k = 0; k < d; ++k) {
            out[t][k] = mask[t] / weight * ds[k];
        }
    }
    return out;
}

std::vector<RolloutRecord> sample(const PolicyParams& params, const Condition& cond, std::size_t length,
                                  std::size_t count, const Sampler& sampler, Rng& rng)
{
    sampler.validate();
    require(count >= 2, ErrorKind::config, "group size must be at least 2");
    require(length >= 1, ErrorKind::input, "length must be positive");
    std::vector<RolloutRecord> out;
    out.reserve(count);
    for (std::size_t g = 0; g < count; ++g) {
        auto tape = start_tape(params, cond, length);
        RolloutRecord rec;
        rec.sequence.tokens.reserve(length);
        for (std::size_t t = 0; t <= length; ++t) {
            step(params, tape, t, t == 0 ? nullptr : &rec.sequence.tokens[t - 1]);
            if (t == length) {
                break;
            }
            const auto logits = output_logits(params, tape.hidden[t]);
            auto dist = sampling_distribution(logits, sampler);
            const double u = rng.uniform();
            double cumulative = 0.0;
            Token chosen = 0;
            bool picked = false;
            for (std::size_t a = 0; a < dist.size(); ++a) {
                if (dist[a] == 0.0) {
                    continue;
                }
                cumulative += dist[a];
                chosen = static_cast<Token>(a);
                if (u < cumulative) {
                    picked = true;
                    break;
                }
            }
            (void)picked;  // rounding can leave u >= cumulative; the last kept token wins
            rec.sequence.tokens.push_back(chosen);
            rec.token_logprob.push_back(std::log(dist[chosen]));
            rec.token_dist.push_back(std::move(dist));
        }
        for (std::size_t t = 0; t < length; ++t) {
            rec.hidden.push_back(tape.hidden[t + 1]);
        }
        rec.mask.assign(length, 1.0);
        // all-zero states (e.g. zero parameters) have no direction; leave it empty
        bool any = false;
        for (const auto& h : rec.hidden) {
            any = any || std::any_of(h.begin(), h.end(), [](double v) { return v != 0.0; });
        }
        if (any) {
            rec.embedding = pooled_embedding(rec.hidden, rec.mask);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<RolloutRecord> sample(const PolicyParams& params, const lattice::BackboneTarget& target,
                                  std::size_t count, const Sampler& sampler, Rng& rng)
{
    return sample(params, Condition::of(target), target.length(), count, sampler, rng);
}

std::vector<double> truncated_log_prob(const PolicyParams& params, const Condition& cond, const Sequence& y,
                                       const Sampler& sampler, std::span<const std::vector<double>> kept)
{
    require(kept.size() == y.size(), ErrorKind::usage, "kept sets must cover every position");
    const auto tape = forward(params, cond, y);
    std::vector<double> out(y.size());
    for (std::size_t t = 0; t < y.size(); ++t) {
        std::vector<double> scaled(tape.logits[t]);
        for (auto& v : scaled) {
            v /= sampler.temperature;
        }
        const auto p = softmax(scaled);
        double mass = 0.0;
        for (std::size_t a = 0; a < p.size(); ++a) {
            mass += kept[t][a] > 0.0 ? p[a] : 0.0;
        }
        require(kept[t][y[t]] > 0.0, ErrorKind::usage, "token outside its kept set");
        out[t] = std::log(p[y[t]] / mass);
    }
    return out;
}

Enumerated enumerate_sequences(const PolicyParams& params, const Condition& cond, std::size_t length,
                               const Sampler& sampler)
{
    sampler.validate();
    const std::size_t a = params.dims.alphabet;
    double count = std::pow(static_cast<double>(a), static_cast<double>(length));
    require(length >= 1 && count <= 65536.0, ErrorKind::capacity, "sequence space too large to enumerate");
    Enumerated out;
    const auto n = static_cast<std::size_t>(count);
    out.sequences.reserve(n);
    for (std::size_t code = 0; code < n; ++code) {
        Sequence y;
        std::size_t c = code;
        for (std::size_t t = 0; t < length; ++t) {
            y.tokens.push_back(static_cast<Token>(c % a));
            c /= a;
        }
        const auto tape = forward(params, cond, y);
        double logp = 0.0;
        for (std::size_t t = 0; t < length && std::isfinite(logp); ++t) {
            const auto dist = sampling_distribution(tape.logits[t], sampler);
            logp = dist[y[t]] > 0.0 ? logp + std::log(dist[y[t]]) : -INFINITY;
        }
        std::vector<std::vector<double>> states;
        for (std::size_t t = 0; t < length; ++t) {
            const auto h = tape.token_state(t);
            states.emplace_back(h.begin(), h.end());
        }
        const std::vector<double> mask(length, 1.0);
        out.embedding.push_back(pooled_embedding(states, mask));
        out.probability.push_back(std::exp(logp));
        out.sequences.push_back(std::move(y));
    }
    return out;
}

Adjoints Adjoints::zeros(const Tape& tape)
{
    Adjoints a;
    const std::size_t alphabet = tape.logits.empty() ? 0 : tape.logits.front().size();
    const std::size_t hidden = tape.hidden.empty() ? 0 : tape.hidden.front().size();
    a.logits.assign(tape.length, std::vector<double>(alphabet, 0.0));
    a.token_state.assign(tape.length, std::vector<double>(hidden, 0.0));
    return a;
}

void backward(const PolicyParams& params, const Tape& tape, const Adjoints& adjoints, PolicyParams& grad)
{
    require(tape.hidden.size() == tape.length + 1 && !tape.tokens.empty(), ErrorKind::usage,
            "backward needs a recorded forward tape");
    require(adjoints.logits.size() == tape.length && adjoints.token_state.size() == tape.length,
            ErrorKind::usage, "adjoints do not match the tape");
    params.check_compatible(grad);
    const auto& d = params.dims;
    std::vector<double> dh_next(d.hidden, 0.0);  // W_hh^T da_{t+1}
    std::vector<double> dcontext(d.context, 0.0);
    for (std::size_t step_index = tape.length + 1; step_index-- > 0;) {
        const std::size_t t = step_index;
        std::vector<double> dh(dh_next);
        if (t < tape.length) {
            const auto& dz = adjoints.logits[t];
            for (std::size_t k = 0; k < d.hidden; ++k) {
                for (std::size_t a = 0; a < d.alphabet; ++a) {
                    dh[k] += params.output_projection(k, a) * dz[a];
                    grad.output_projection(k, a) += tape.hidden[t][k] * dz[a];
                }
            }
        }
        if (t >= 1) {
            const auto& ds = adjoints.token_state[t - 1];
            for (std::size_t k = 0; k < d.hidden; ++k) {
                dh[k] += ds[k];
            }
        }
        std::vector<double> da(d.hidden);
        for (std::size_t k = 0; k < d.hidden; ++k) {
            const double h = tape.hidden[t][k];
            da[k] = dh[k] * (1.0 - h * h);
        }
        const auto& x = tape.inputs[t];
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        std::vector<double> dx(x.size(), 0.0);
        for (std::size_t k = 0; k < d.hidden; ++k) {
            if (da[k] == 0.0) {
                continue;
            }
            grad.bias[k] += da[k];
            for (std::size_t c = 0; c < x.size(); ++c) {
                grad.input_weights(k, c) += da[k] * x[c];
                dx[c] += params.input_weights(k, c) * da[k];
            }
            if (t > 0) {
                for (std::size_t c = 0; c < d.hidden; ++c) {
                    grad.recurrent_weights(k, c) += da[k] * tape.hidden[t - 1][c];
                    dh_next[c] += params.recurrent_weights(k, c) * da[k];
                }
            }
        }
        if (t > 0) {
            const Token prev = tape.tokens[t - 1];
            for (std::size_t e = 0; e < d.embedding; ++e) {
                grad.token_embedding(prev, e) += dx[e];
            }
        }
        for (std::size_t c = 0; c < d.context; ++c) {
            dcontext[c] += dx[d.embedding + c];
        }
    }
    if (!tape.condition.masked) {
        const auto& f = tape.condition.features;
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (f[i] == 0.0) {
                continue;
            }
            for (std::size_t c = 0; c < d.context; ++c) {
                grad.condition_projection(i, c) += f[i] * dcontext[c];
            }
        }
    }
}

double categorical_kl(std::span<const double> p, std::span<const double> q)
{
    double kl = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
        if (p[a] > 0.0) {
            kl += p[a] * (std::log(p[a]) - std::log(q[a]));
        }
    }
    return kl;
}

std::vector<double> categorical_kl_logit_grad(std::span<const double> p, std::span<const double> q)
{
    const double kl = categorical_kl(p, q);
    std::vector<double> g(p.size(), 0.0);
    for (std::size_t a = 0; a < p.size(); ++a) {
        if (p[a] > 0.0) {
            g[a] = p[a] * (std::log(p[a]) - std::log(q[a]) - kl);
        }
    }
    return g;
}

nlohmann::json to_json(const PolicyParams& params)
{
    return {{"format", "pzero-policy/1"},
            {"alphabet", params.alphabet.symbols()},
            {"seed", params.seed},
            {"dimensions",
             {{"alphabet", params.dims.alphabet},
              {"embedding", params.dims.embedding},
              {"features", params.dims.features},
              {"context", params.dims.context},
              {"hidden", params.dims.hidden}}},
            {"token_embedding", matrix_json(params.token_embedding)},
            {"condition_projection", matrix_json(params.condition_projection)},
            {"input_weights", matrix_json(params.input_weights)},
            {"recurrent_weights", matrix_json(params.recurrent_weights)},
            {"bias", params.bias},
            {"output_projection", matrix_json(params.output_projection)}};
}

PolicyParams params_from_json(const nlohmann::json& j)
{
    try {
        require(j.at("format") == "pzero-policy/1", ErrorKind::io, "not a policy checkpoint");
        Dimensions dims;
        const auto& jd = j.at("dimensions");
        dims.alphabet = jd.at("alphabet").get<std::size_t>();
        dims.embedding = jd.at("embedding").get<std::size_t>();
        dims.features = jd.at("features").get<std::size_t>();
        dims.context = jd.at("context").get<std::size_t>();
        dims.hidden = jd.at("hidden").get<std::size_t>();
        auto p = PolicyParams::zeros(Alphabet(j.at("alphabet").get<std::string>()), dims);
        p.seed = j.at("seed").get<std::uint64_t>();
        p.token_embedding = matrix_from(j.at("token_embedding"), dims.alphabet, dims.embedding, "token_embedding");
        p.condition_projection =
            matrix_from(j.at("condition_projection"), dims.features, dims.context, "condition_projection");
        p.input_weights =
            matrix_from(j.at("input_weights"), dims.hidden, dims.embedding + dims.context, "input_weights");
        p.recurrent_weights = matrix_from(j.at("recurrent_weights"), dims.hidden, dims.hidden, "recurrent_weights");
        p.bias = j.at("bias").get<std::vector<double>>();
        require(p.bias.size() == dims.hidden, ErrorKind::io, "checkpoint bias has the wrong size");
        p.output_projection = matrix_from(j.at("output_projection"), dims.hidden, dims.alphabet, "output_projection");
        require(p.all_finite(), ErrorKind::io, "checkpoint contains non-finite weights");
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, std::string("malformed policy checkpoint: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::io) {
            throw;
        }
        fail(ErrorKind::io, std::string("invalid policy checkpoint: ") + e.what());
    }
}

std::string serialize(const PolicyParams& params)
{
    return to_json(params).dump(1) + "\n";
}

}  // namespace pzero::policy
