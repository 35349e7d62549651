#include "aligntf/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "aligntf/errors.hpp"

namespace aligntf {

double normalized_score(double log_prob, std::size_t length, double alpha) {
    if (length == 0) return log_prob;
    return log_prob / std::pow(static_cast<double>(length), alpha);
}

double normalized_score(const Hypothesis& h, double alpha) { return normalized_score(h.log_prob, h.generated(), alpha); }

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw DimensionError("argmax of an empty distribution");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

Hypothesis greedy_decode(const NextLogProbs& next, std::size_t bos, std::size_t eos, std::size_t max_tokens) {
    Hypothesis h;
    h.tokens.push_back(bos);
    while (h.generated() < max_tokens) {
        const auto lp = next(h.tokens);
        const std::size_t id = argmax(lp);
        h.tokens.push_back(id);
        h.log_prob += lp[id];
        if (id == eos) {
            h.finished = true;
            break;
        }
    }
    return h;
}

namespace {

struct Candidate {
    double log_prob;
    std::size_t beam;
    std::size_t token;
};

}  // namespace

Hypothesis beam_decode(const NextLogProbs& next, std::size_t bos, std::size_t eos, std::size_t width,
                       std::size_t max_tokens, double alpha) {
    if (width == 0) throw ConfigError("beam width must be at least 1");
    std::vector<Hypothesis> alive(1);
    alive[0].tokens.push_back(bos);
    std::vector<Hypothesis> done;

    for (std::size_t step = 0; step < max_tokens && !alive.empty(); ++step) {
        std::vector<Candidate> cands;
        for (std::size_t b = 0; b < alive.size(); ++b) {
            const auto lp = next(alive[b].tokens);
            for (std::size_t tok = 0; tok < lp.size(); ++tok) cands.push_back({alive[b].log_prob + lp[tok], b, tok});
        }
        const std::size_t keep = std::min(width, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                          [](const Candidate& a, const Candidate& b) {
                              if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                              return std::tie(a.beam, a.token) < std::tie(b.beam, b.token);
                          });
        std::vector<Hypothesis> next_alive;
        for (std::size_t i = 0; i < keep; ++i) {
            Hypothesis h = alive[cands[i].beam];
            h.tokens.push_back(cands[i].token);
            h.log_prob = cands[i].log_prob;
            if (cands[i].token == eos) {
                h.finished = true;
                done.push_back(std::move(h));
            } else {
                next_alive.push_back(std::move(h));
            }
        }
        alive = std::move(next_alive);
    }
    for (auto& h : alive) done.push_back(std::move(h));

    std::size_t best = 0;
    for (std::size_t i = 1; i < done.size(); ++i) {
        if (normalized_score(done[i], alpha) > normalized_score(done[best], alpha)) best = i;
    }
    Hypothesis result = std::move(done[best]);
    if (width > 1) {
        Hypothesis greedy = greedy_decode(next, bos, eos, max_tokens);
        if (normalized_score(greedy, alpha) > normalized_score(result, alpha)) return greedy;
    }
    return result;
}

double sequence_log_prob(const NextLogProbs& next, std::span<const std::size_t> tokens) {
    double total = 0.0;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        const auto lp = next(tokens.first(i));
        if (tokens[i] >= lp.size()) throw DataError("token id outside the distribution");
        total += lp[tokens[i]];
    }
    return total;
}

}  // namespace aligntf
