#include "aligntf/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "aligntf/decoder.hpp"
#include "aligntf/errors.hpp"

namespace aligntf {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            out.emplace_back(1, raw);
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

Vocabulary::Vocabulary() {
    for (auto t : kReservedTokens) {
        index_.emplace(std::string(t), tokens_.size());
        tokens_.emplace_back(t);
    }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < std::size(kReservedTokens)) throw DataError("vocabulary is missing the reserved header");
    for (std::size_t i = 0; i < std::size(kReservedTokens); ++i) {
        if (tokens[i] != kReservedTokens[i]) {
            throw DataError("vocabulary line " + std::to_string(i + 1) + " must be " + std::string(kReservedTokens[i]));
        }
    }
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.index_.clear();
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        if (v.tokens_[i].empty()) throw DataError("empty token at vocabulary id " + std::to_string(i));
        if (!v.index_.emplace(v.tokens_[i], i).second) throw DataError("duplicate vocabulary token " + v.tokens_[i]);
    }
    return v;
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t min_count) {
    if (texts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts)
        for (auto& tok : tokenize(t)) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> order;
    for (auto& [tok, n] : counts) {
        const bool reserved = std::find(std::begin(kReservedTokens), std::end(kReservedTokens), tok) !=
                              std::end(kReservedTokens);
        if (n >= min_count && !reserved) order.emplace_back(tok, n);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens(std::begin(kReservedTokens), std::end(kReservedTokens));
    for (auto& [tok, n] : order) tokens.push_back(tok);
    return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file " + path.string());
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= tokens_.size()) throw DataError("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[id];
}

std::size_t Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
    std::vector<std::size_t> ids{kBosId};
    for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
    ids.push_back(kEosId);
    return ids;
}

std::vector<std::string> Vocabulary::words(std::span<const std::size_t> ids) const {
    std::vector<std::string> out;
    for (auto id : ids) {
        if (id == kEosId) break;
        if (id == kBosId || id == kPadId) continue;
        out.push_back(token(id));
    }
    return out;
}

std::string Vocabulary::decode(std::span<const std::size_t> ids) const {
    const auto w = words(ids);
    return join_tokens(w);
}

}  // namespace aligntf
