#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aligntf {

inline constexpr std::string_view kReservedTokens[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

/// Lowercases and splits on whitespace; each punctuation character becomes
/// its own token.
std::vector<std::string> tokenize(std::string_view text);

std::string join_tokens(std::span<const std::string> tokens);

class Vocabulary {
public:
    Vocabulary();

    /// Ids after the reserved block ordered by descending frequency, then
    /// lexicographically. Tokens seen fewer than `min_count` times map to UNK.
    static Vocabulary build(std::span<const std::string> texts, std::size_t min_count = 1);

    /// Full id-ordered token list; the reserved block must come first.
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    [[nodiscard]] std::size_t size() const { return tokens_.size(); }
    [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }
    [[nodiscard]] const std::string& token(std::size_t id) const;
    [[nodiscard]] std::size_t id(std::string_view token) const;
    [[nodiscard]] bool contains(std::string_view token) const;

    /// [BOS, ids..., EOS]
    [[nodiscard]] std::vector<std::size_t> encode(std::string_view text) const;
    /// Drops BOS/PAD, stops at EOS, joins with single spaces.
    [[nodiscard]] std::string decode(std::span<const std::size_t> ids) const;
    /// Words of a decoded sequence, same filtering as decode().
    [[nodiscard]] std::vector<std::string> words(std::span<const std::size_t> ids) const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace aligntf
