#include "aligntf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "aligntf/errors.hpp"

namespace aligntf {

namespace {

void check_aligned(std::size_t hyps, std::size_t refs) {
    if (hyps == 0) throw DataError("metric over an empty corpus");
    if (hyps != refs) {
        throw DataError("metric needs one reference per hypothesis, got " + std::to_string(hyps) + " and " +
                        std::to_string(refs));
    }
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const TokenList& toks, std::size_t n) {
    NgramCounts out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[TokenList(toks.begin() + i, toks.begin() + i + n)];
    return out;
}

}  // namespace

std::vector<double> bleu(std::span<const TokenList> hyps, std::span<const TokenList> refs, std::size_t max_n,
                         bool smooth) {
    check_aligned(hyps.size(), refs.size());
    if (max_n == 0) throw ConfigError("BLEU order must be at least 1");
    std::vector<double> matched(max_n, 0.0), total(max_n, 0.0);
    double hyp_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        hyp_len += static_cast<double>(hyps[s].size());
        ref_len += static_cast<double>(refs[s].size());
        for (std::size_t n = 1; n <= max_n; ++n) {
            const auto h = ngrams(hyps[s], n);
            const auto r = ngrams(refs[s], n);
            for (const auto& [g, c] : h) {
                auto it = r.find(g);
                if (it != r.end()) matched[n - 1] += static_cast<double>(std::min(c, it->second));
                total[n - 1] += static_cast<double>(c);
            }
        }
    }
    const double bp = hyp_len == 0 ? 0.0 : std::min(1.0, std::exp(1.0 - ref_len / hyp_len));
    std::vector<double> out;
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 1; n <= max_n; ++n) {
        double m = matched[n - 1];
        double t = total[n - 1];
        if (smooth && n >= 2 && m == 0.0) {
            m = 1.0;
            t = std::max(t, 1.0);
        }
        if (m == 0.0 || t == 0.0) zero = true;
        else log_sum += std::log(m / t);
        out.push_back(zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n)));
    }
    return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_pair(std::span<const std::string> hyp, std::span<const std::string> ref, double beta) {
    if (hyp.empty() || ref.empty()) return 0.0;
    const auto lcs = static_cast<double>(lcs_length(hyp, ref));
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(hyp.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = beta * beta;
    return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(std::span<const TokenList> hyps, std::span<const TokenList> refs, double beta) {
    check_aligned(hyps.size(), refs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < hyps.size(); ++i) total += rouge_l_pair(hyps[i], refs[i], beta);
    return total / static_cast<double>(hyps.size());
}

bool contains_phrase(std::span<const std::string> haystack, std::span<const std::string> needle) {
    if (needle.empty()) return true;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

double abnormality_recall(std::span<const std::string> generated, std::span<const Sample> samples,
                          const TagCatalog& catalog) {
    check_aligned(generated.size(), samples.size());
    std::size_t wanted = 0, found = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].tags.empty()) continue;
        const auto text = tokenize(generated[i]);
        for (auto t : samples[i].tags) {
            if (t >= catalog.size()) throw DataError("sample " + samples[i].id + " has a tag outside the catalog");
            ++wanted;
            if (contains_phrase(text, tokenize(catalog.phrases[t]))) ++found;
        }
    }
    return wanted == 0 ? 1.0 : static_cast<double>(found) / static_cast<double>(wanted);
}

EvalReport evaluate_texts(std::span<const std::string> generated, std::span<const Sample> samples,
                          const TagCatalog& catalog) {
    check_aligned(generated.size(), samples.size());
    std::vector<TokenList> hyps, refs;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        hyps.push_back(tokenize(generated[i]));
        refs.push_back(tokenize(samples[i].report));
    }
    const auto b = bleu(hyps, refs, 4, true);
    EvalReport r;
    r.bleu_1 = b[0];
    r.bleu_2 = b[1];
    r.bleu_3 = b[2];
    r.bleu_4 = b[3];
    r.rouge_l = rouge_l(hyps, refs);
    r.abnormality_recall = abnormality_recall(generated, samples, catalog);
    r.samples = samples.size();
    return r;
}

std::string EvalReport::to_key_values() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "bleu_1=%.6f\nbleu_2=%.6f\nbleu_3=%.6f\nbleu_4=%.6f\nrouge_l=%.6f\nabnormality_recall=%.6f\n"
                  "samples=%zu\n",
                  bleu_1, bleu_2, bleu_3, bleu_4, rouge_l, abnormality_recall, samples);
    return buf;
}

EvalReport EvalReport::from_key_values(const std::string& text) {
    EvalReport r;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const auto key = line.substr(0, eq);
        const auto val = line.substr(eq + 1);
        if (key == "bleu_1") r.bleu_1 = std::stod(val);
        else if (key == "bleu_2") r.bleu_2 = std::stod(val);
        else if (key == "bleu_3") r.bleu_3 = std::stod(val);
        else if (key == "bleu_4") r.bleu_4 = std::stod(val);
        else if (key == "rouge_l") r.rouge_l = std::stod(val);
        else if (key == "abnormality_recall") r.abnormality_recall = std::stod(val);
        else if (key == "samples") r.samples = std::stoul(val);
        else throw DataError("unknown evaluation key " + key);
    }
    return r;
}

void EvalReport::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_key_values();
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::size_t width = 5;
    for (const auto& [label, r] : rows) width = std::max(width, label.size());
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %7s  %7s  %7s  %7s  %7s  %7s\n", static_cast<int>(width), "model", "BLEU-1",
                  "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L", "RECALL");
    os << buf;
    for (const auto& [label, r] : rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %7.4f  %7.4f  %7.4f  %7.4f  %7.4f  ", static_cast<int>(width),
                      label.c_str(), r.bleu_1, r.bleu_2, r.bleu_3, r.bleu_4, r.rouge_l);
        os << buf;
        if (r.abnormality_recall < 0) {
            std::snprintf(buf, sizeof buf, "%7s\n", "-");
        } else {
            std::snprintf(buf, sizeof buf, "%7.4f\n", r.abnormality_recall);
        }
        os << buf;
    }
    return os.str();
}

std::string EvalReport::table(const std::string& label) const { return format_table({{label, *this}}); }

}  // namespace aligntf
