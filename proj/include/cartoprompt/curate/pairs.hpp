#pragma once

// Teacher prompt templates, the tolerant pair-list parser, filtering, datapoint
// assembly and dataset splitting.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cartoprompt/errors.hpp"

namespace cartoprompt::curate {

struct QAPair {
  std::string prompt;
  std::string answer;
  std::string source_preprompt_id;
  std::string teacher_batch;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

struct Datapoint {
  std::string text;
  std::string preprompt_id;
  long pair_index = 0;

  friend bool operator==(const Datapoint&, const Datapoint&) = default;
};

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline const std::vector<std::string>& default_refusal_filters() {
  static const std::vector<std::string> filters{"does not provide sufficient", "not enough information"};
  return filters;
}

// ---------------------------------------------------------------------------
// Templates

inline const std::vector<std::string>& template_ids() {
  static const std::vector<std::string> ids{"instruction", "preprompt", "diversity", "warning", "topics"};
  return ids;
}

inline std::string template_text(std::string_view id, int pairs_per_request = 50) {
  const std::string n = std::to_string(pairs_per_request);
  if (id == "instruction")
    return "I will give these types of preprompts and you will generate prompt-answer pairs in python list of "
           "dictionaries format. These prompts should be questions that businessmen, citizens, tourists would demand "
           "based on the data in the preprompt. Generate " +
           n +
           " prompt-answer pairs with very diverse topics. Important : Do not generate prompts that data in "
           "preprompt is not sufficient to answer !";
  if (id == "diversity")
    return "Generate " + n +
           " prompt-answer pairs, but be creative. Try to cover very different aspects in prompts, such as which "
           "type of commercial venture would suit here, whether it is residential or touristic, how you can describe "
           "this area etc.";
  if (id == "warning")
    return "Important Warning : \"Do not include questions that we dont have sufficient data in preprompt to "
           "answer\" Before generating, repeat this last Important warning i gave, for affirmation. So, dont "
           "generate answers like \"the preprmpt does not provide sufficient info ...\"";
  if (id == "topics")
    return "Topics shall be extremely variant : what type of commercial venture can be opened here, does it look "
           "like a transportation hub, what type of an urban area is this (residential, commercial, touristic, "
           "bussiness, industrial etc.) , does it look like a place where a grocery shop would earn much, is there a "
           "tram line, does it look like a central quarter in the city, etc. etc. should be extremely variant. Note, "
           "in python list of dictionaries";
  throw ConfigError("unknown teacher template: " + std::string(id));
}

inline std::string preprompt_injection(const std::string& preprompt) { return "preprompt = '" + preprompt + "'"; }

// The template's block followed by the preprompt injection, as user messages.
// "preprompt" yields the injection alone.
inline std::vector<ChatMessage> render_teacher_messages(const std::string& preprompt, std::string_view template_id,
                                                        int pairs_per_request = 50) {
  if (std::find(template_ids().begin(), template_ids().end(), template_id) == template_ids().end())
    throw ConfigError("unknown teacher template: " + std::string(template_id));
  if (preprompt.find_first_not_of(" \t\r\n") == std::string::npos)
    throw PreconditionError("preprompt must not be empty");
  std::vector<ChatMessage> out;
  if (template_id != "preprompt") out.push_back({"user", template_text(template_id, pairs_per_request)});
  out.push_back({"user", preprompt_injection(preprompt)});
  return out;
}

// instruction, injection, diversity, warning, topics
inline std::vector<ChatMessage> teacher_conversation(const std::string& preprompt, int pairs_per_request = 50) {
  auto out = render_teacher_messages(preprompt, "instruction", pairs_per_request);
  for (const char* id : {"diversity", "warning", "topics"})
    out.push_back({"user", template_text(id, pairs_per_request)});
  return out;
}

// ---------------------------------------------------------------------------
// Parser for the quasi-literal list of dictionaries a teacher replies with.

class PairParseError : public ParseError {
 public:
  PairParseError(const std::string& what, std::string raw) : ParseError(what, 0), raw_(std::move(raw)) {}
  const std::string& raw_text() const noexcept { return raw_; }

 private:
  std::string raw_;
};

struct ParsedPairs {
  std::vector<QAPair> pairs;
  std::size_t skipped = 0;  // dictionaries without a usable prompt/answer
};

namespace detail {

struct Value;
using Dict = std::vector<std::pair<std::string, Value>>;

struct Value {
  enum class Kind { string, other, dict, list } kind = Kind::other;
  std::string str;
  Dict dict;
  std::vector<Value> list;
};

class ListParser {
 public:
  explicit ListParser(std::string_view s, std::size_t pos) : s_(s), i_(pos) {}

  std::optional<std::vector<Value>> list() {
    if (!eat('[')) return std::nullopt;
    std::vector<Value> items;
    while (true) {
      ws();
      if (eat(']')) return items;
      auto v = value();
      if (!v) return std::nullopt;
      items.push_back(std::move(*v));
      ws();
      if (eat(',')) continue;
      if (eat(']')) return items;
      return std::nullopt;
    }
  }

 private:
  std::optional<Value> value() {
    ws();
    if (i_ >= s_.size()) return std::nullopt;
    const char c = s_[i_];
    if (c == '"' || c == '\'') {
      auto str = string();
      if (!str) return std::nullopt;
      Value v;
      v.kind = Value::Kind::string;
      v.str = std::move(*str);
      return v;
    }
    if (c == '{') {
      auto d = dict();
      if (!d) return std::nullopt;
      Value v;
      v.kind = Value::Kind::dict;
      v.dict = std::move(*d);
      return v;
    }
    if (c == '[') {
      auto l = list();
      if (!l) return std::nullopt;
      Value v;
      v.kind = Value::Kind::list;
      v.list = std::move(*l);
      return v;
    }
    // Bare scalar: number, True/False/None, true/false/null.
    const std::size_t start = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '.' || s_[i_] == '-' ||
                              s_[i_] == '+' || s_[i_] == '_'))
      ++i_;
    if (i_ == start) return std::nullopt;
    Value v;
    v.str = std::string(s_.substr(start, i_ - start));
    return v;
  }

  std::optional<Dict> dict() {
    if (!eat('{')) return std::nullopt;
    Dict d;
    while (true) {
      ws();
      if (eat('}')) return d;
      if (i_ >= s_.size() || (s_[i_] != '"' && s_[i_] != '\'')) return std::nullopt;
      auto key = string();
      if (!key) return std::nullopt;
      ws();
      if (!eat(':')) return std::nullopt;
      auto v = value();
      if (!v) return std::nullopt;
      d.emplace_back(std::move(*key), std::move(*v));
      ws();
      if (eat(',')) continue;
      if (eat('}')) return d;
      return std::nullopt;
    }
  }

  std::optional<std::string> string() {
    const char q = s_[i_++];
    std::string out;
    while (i_ < s_.size()) {
      const char c = s_[i_++];
      if (c == q) return out;
      if (c == '\n' && q == '\'') return std::nullopt;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (i_ >= s_.size()) return std::nullopt;
      const char e = s_[i_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '\\': out += '\\'; break;
        case '\'': out += '\''; break;
        case '"': out += '"'; break;
        case '/': out += '/'; break;
        case 'u': {
          if (i_ + 4 > s_.size()) return std::nullopt;
          unsigned cp = 0;
          for (int k = 0; k < 4; ++k) {
            const char h = s_[i_++];
            cp <<= 4;
            if (h >= '0' && h <= '9') cp |= static_cast<unsigned>(h - '0');
            else if (h >= 'a' && h <= 'f') cp |= static_cast<unsigned>(h - 'a' + 10);
            else if (h >= 'A' && h <= 'F') cp |= static_cast<unsigned>(h - 'A' + 10);
            else return std::nullopt;
          }
          append_utf8(out, cp);
          break;
        }
        default:  // unknown escape kept literally, as Python does
          out += '\\';
          out += e;
      }
    }
    return std::nullopt;
  }

  static void append_utf8(std::string& out, unsigned cp) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }

  void ws() {
    while (i_ < s_.size()) {
      const char c = s_[i_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++i_;
      } else if (c == '#') {  // Python comment
        while (i_ < s_.size() && s_[i_] != '\n') ++i_;
      } else {
        break;
      }
    }
  }

  bool eat(char c) {
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }

  std::string_view s_;
  std::size_t i_;
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline const std::string* lookup(const Dict& d, std::initializer_list<std::string_view> keys) {
  for (auto key : keys)
    for (const auto& [k, v] : d)
      if (k == key && v.kind == Value::Kind::string) return &v.str;
  return nullptr;
}

}  // namespace detail

// Takes the first bracketed list whose elements are all dictionaries; surrounding prose
// and code fences are ignored.
inline ParsedPairs parse_pairs(std::string_view teacher_text) {
  for (std::size_t pos = teacher_text.find('['); pos != std::string_view::npos;
       pos = teacher_text.find('[', pos + 1)) {
    detail::ListParser p(teacher_text, pos);
    auto items = p.list();
    if (!items || items->empty()) continue;
    if (!std::all_of(items->begin(), items->end(),
                     [](const detail::Value& v) { return v.kind == detail::Value::Kind::dict; }))
      continue;
    ParsedPairs out;
    for (const auto& item : *items) {
      const std::string* q = detail::lookup(item.dict, {"prompt", "question"});
      const std::string* a = detail::lookup(item.dict, {"answer", "response"});
      if (!q || !a) {
        ++out.skipped;
        continue;
      }
      out.pairs.push_back({*q, *a, "", ""});
    }
    return out;
  }
  throw PairParseError("no list of dictionaries found in teacher reply", std::string(teacher_text));
}

// ---------------------------------------------------------------------------
// Filtering

inline constexpr std::string_view kQuestionMarker = " Question : ";
inline constexpr std::string_view kAnswerMarker = " Answer : ";
inline constexpr std::string_view kAreaPrefix = "Area : ";

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

// Drops refusals, marker collisions, blank pairs and exact duplicates. The set of pairs
// already seen persists across calls so deduplication spans a whole job.
class PairFilter {
 public:
  explicit PairFilter(std::vector<std::string> refusal_filters = default_refusal_filters()) {
    for (const auto& f : refusal_filters) filters_.push_back(detail::ascii_lower(f));
  }

  void remember(const std::string& prompt, const std::string& answer) { seen_.emplace(prompt, answer); }

  bool is_refusal(std::string_view answer) const {
    const std::string lower = detail::ascii_lower(answer);
    return std::any_of(filters_.begin(), filters_.end(),
                       [&](const std::string& f) { return lower.find(f) != std::string::npos; });
  }

  static bool collides_with_markers(const QAPair& p) {
    for (const auto* s : {&p.prompt, &p.answer})
      if (s->find(kQuestionMarker) != std::string::npos || s->find(kAnswerMarker) != std::string::npos) return true;
    return false;
  }

  std::vector<QAPair> apply(std::vector<QAPair> pairs) {
    std::vector<QAPair> out;
    for (auto& p : pairs) {
      if (detail::trim(p.prompt).empty() || detail::trim(p.answer).empty()) continue;
      if (is_refusal(p.answer) || collides_with_markers(p)) continue;
      if (!seen_.emplace(p.prompt, p.answer).second) continue;
      out.push_back(std::move(p));
    }
    return out;
  }

 private:
  std::vector<std::string> filters_;
  std::set<std::pair<std::string, std::string>> seen_;
};

inline std::vector<QAPair> filter_pairs(std::vector<QAPair> pairs,
                                        const std::vector<std::string>& refusal_filters = default_refusal_filters()) {
  return PairFilter(refusal_filters).apply(std::move(pairs));
}

// ---------------------------------------------------------------------------
// Datapoints

inline Datapoint assemble_datapoint(const std::string& preprompt, const QAPair& pair, const std::string& preprompt_id = "",
                                    long pair_index = 0) {
  std::string text;
  text.reserve(preprompt.size() + pair.prompt.size() + pair.answer.size() + 32);
  text.append(kAreaPrefix).append(preprompt).append(kQuestionMarker).append(pair.prompt);
  text.append(kAnswerMarker).append(pair.answer);
  return {std::move(text), preprompt_id, pair_index};
}

struct DatapointParts {
  std::string preprompt;
  std::string prompt;
  std::string answer;

  friend bool operator==(const DatapointParts&, const DatapointParts&) = default;
};

// Inverse of assemble_datapoint; nullopt when the text does not follow the grammar.
inline std::optional<DatapointParts> split_datapoint(std::string_view text) {
  if (!text.starts_with(kAreaPrefix)) return std::nullopt;
  const auto q = text.find(kQuestionMarker, kAreaPrefix.size());
  if (q == std::string_view::npos) return std::nullopt;
  const auto a = text.find(kAnswerMarker, q + kQuestionMarker.size());
  if (a == std::string_view::npos) return std::nullopt;
  DatapointParts out{std::string(text.substr(kAreaPrefix.size(), q - kAreaPrefix.size())),
                     std::string(text.substr(q + kQuestionMarker.size(), a - q - kQuestionMarker.size())),
                     std::string(text.substr(a + kAnswerMarker.size()))};
  if (out.answer.find(kQuestionMarker) != std::string::npos || out.answer.find(kAnswerMarker) != std::string::npos)
    return std::nullopt;
  return out;
}

// ---------------------------------------------------------------------------
// Split

// Uniform integer in [0, n) by rejection, identical on every platform.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return x % n;
}

inline std::size_t validation_size(std::size_t n, double train_fraction) {
  const auto v = static_cast<std::size_t>(std::llround((1.0 - train_fraction) * static_cast<double>(n)));
  return std::clamp<std::size_t>(v, 1, n - 1);
}

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> validation;
};

template <typename T>
Split<T> split_dataset(std::vector<T> items, double train_fraction = 0.99, std::uint64_t seed = 0) {
  if (items.size() < 2) throw PreconditionError("split needs at least 2 datapoints");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size() - 1; i > 0; --i) std::swap(items[i], items[uniform_below(rng, i + 1)]);
  const std::size_t v = validation_size(items.size(), train_fraction);
  Split<T> out;
  out.validation.assign(std::make_move_iterator(items.begin()), std::make_move_iterator(items.begin() + v));
  out.train.assign(std::make_move_iterator(items.begin() + v), std::make_move_iterator(items.end()));
  return out;
}

}  // namespace cartoprompt::curate
