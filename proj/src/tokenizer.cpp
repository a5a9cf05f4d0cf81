#include "clonebot/tokenizer.hpp"

#include <istream>
#include <ostream>

#include "clonebot/error.hpp"
#include "clonebot/text.hpp"

namespace clonebot {

std::string WordTokenizer::speaker_token_string(std::string_view speaker) {
  std::string s = "<spk_";
  s.append(speaker);
  s.push_back('>');
  return s;
}

TokenId WordTokenizer::add(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

WordTokenizer WordTokenizer::from_tokens(const std::vector<std::string>& content,
                                         const std::vector<SpeakerId>& speakers) {
  WordTokenizer tok;
  tok.add(std::string(kUnk));
  tok.add(std::string(kEos));
  for (const auto& t : content) {
    if (t.starts_with("<spk_") || t == kUnk || t == kEos)
      throw ParameterError("content token collides with a special token: " + t);
    tok.add(t);
  }
  tok.first_speaker_ = static_cast<TokenId>(tok.tokens_.size());
  for (const auto& s : speakers) tok.add(speaker_token_string(s));
  return tok;
}

WordTokenizer WordTokenizer::build(const Corpus& corpus) {
  std::vector<std::string> content;
  auto collect = [&](std::string_view text) {
    for (auto& w : split_words(text)) content.push_back(std::move(w));
  };
  for (const auto& conv : corpus.conversations)
    for (const auto& u : conv.utterances) collect(u.text);
  for (const auto& s : corpus.speakers) collect(s);
  return from_tokens(content, {corpus.speakers.begin(), corpus.speakers.end()});
}

WordTokenizer WordTokenizer::load_vocabulary(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (lines.size() < 2 || lines[0] != kUnk || lines[1] != kEos)
    throw FormatError("vocabulary must start with <unk> and <eos>");

  std::vector<std::string> content;
  std::vector<SpeakerId> speakers;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto& t = lines[i];
    if (t.starts_with("<spk_") && t.ends_with('>') && t.size() > 6) {
      speakers.push_back(t.substr(5, t.size() - 6));
    } else {
      if (!speakers.empty()) throw FormatError("content token after speaker tokens at line " + std::to_string(i + 1));
      content.push_back(t);
    }
  }
  WordTokenizer tok = from_tokens(content, speakers);
  if (tok.vocab_size() != lines.size()) throw FormatError("vocabulary contains duplicate tokens");
  return tok;
}

void WordTokenizer::save_vocabulary(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

std::vector<TokenId> WordTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) {
    auto it = ids_.find(w);
    ids.push_back(it != ids_.end() && it->second < first_speaker_ ? it->second : unk_id());
  }
  return ids;
}

std::string WordTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out.append(token_string(ids[i]));
  }
  return out;
}

std::optional<TokenId> WordTokenizer::speaker_token(std::string_view speaker) const {
  auto it = ids_.find(speaker_token_string(speaker));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& WordTokenizer::token_string(TokenId id) const {
  if (id >= tokens_.size()) throw ParameterError("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

}  // namespace clonebot
