#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clonebot/corpus.hpp"

namespace clonebot {

using TokenId = std::uint32_t;

/// Text <-> token id mapping plus the special ids the context formats need.
/// Implementations are immutable once constructed.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;

  virtual std::size_t vocab_size() const = 0;
  virtual TokenId eos_id() const = 0;
  virtual TokenId unk_id() const = 0;

  /// Id of the "<spk_{speaker}>" special token, if the speaker is registered.
  virtual std::optional<TokenId> speaker_token(std::string_view speaker) const = 0;
  virtual bool is_speaker_token(TokenId id) const = 0;

  /// Surface string of a single id (special tokens render as "<unk>", ...).
  virtual const std::string& token_string(TokenId id) const = 0;
};

/// Reference tokenizer: whitespace-and-punctuation splitting over a
/// corpus-built vocabulary.
///
/// Id layout: 0 = "<unk>", 1 = "<eos>", then content tokens in first
/// occurrence order, then one "<spk_{id}>" token per registered speaker.
/// Content tokens can never look like special tokens because '<' and '>'
/// always split off as single-character tokens.
class WordTokenizer final : public Tokenizer {
 public:
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kEos = "<eos>";

  /// Vocabulary from all utterance texts, then the word tokens of every
  /// speaker id (so speaker ids can be spelled out), then speaker tokens.
  static WordTokenizer build(const Corpus& corpus);

  /// Explicit vocabulary; handy for tests. Speakers get special tokens in
  /// the given order.
  static WordTokenizer from_tokens(const std::vector<std::string>& content,
                                   const std::vector<SpeakerId>& speakers);

  /// Vocabulary file: one token per line, line number = id.
  static WordTokenizer load_vocabulary(std::istream& in);
  void save_vocabulary(std::ostream& out) const;

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;

  std::size_t vocab_size() const override { return tokens_.size(); }
  TokenId eos_id() const override { return 1; }
  TokenId unk_id() const override { return 0; }
  std::optional<TokenId> speaker_token(std::string_view speaker) const override;
  bool is_speaker_token(TokenId id) const override { return id >= first_speaker_ && id < tokens_.size(); }
  const std::string& token_string(TokenId id) const override;

  std::size_t content_size() const { return first_speaker_ - 2; }

  static std::string speaker_token_string(std::string_view speaker);

 private:
  WordTokenizer() = default;
  TokenId add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId first_speaker_ = 2;
};

}  // namespace clonebot
