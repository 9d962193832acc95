#pragma once

#include <algorithm>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "cartoprompt/descriptor.hpp"

namespace cartoprompt {

struct VerbalizerRules {
  std::string list_separator = ", ";
  std::string name_joiner = ", ";
  std::string sentence_separator = " ";
  std::string plural_suffix = "(s)";
};

namespace detail {

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// 300.0 -> "300", 250.5 -> "250.5"
inline std::string format_number(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

inline std::string render_preprompt(const AreaDescriptor& d, const VerbalizerRules& rules = {}) {
  using detail::join;
  std::vector<std::string> sentences;

  sentences.push_back("This is a circular area of radius of " + detail::format_number(d.radius_m) +
                      " meters that intersects province(s) of " + join(d.provinces, rules.name_joiner) +
                      " and district(s) of " + join(d.districts, rules.name_joiner) + ".");

  if (!d.amenity_counts.empty()) {
    std::vector<std::string> items;
    for (const auto& [value, n] : d.amenity_counts)
      items.push_back(std::to_string(n) + " " + value + rules.plural_suffix);
    sentences.push_back("There are " + join(items, rules.list_separator) + ".");
  }

  if (d.building_count > 0)
    sentences.push_back("There are " + std::to_string(d.building_count) + " buildings which cover " +
                        std::to_string(d.building_coverage_pct) + "% of the total area.");

  if (!d.coverage_entries.empty()) {
    auto entries = d.coverage_entries;
    std::stable_sort(entries.begin(), entries.end(), [](const CoverageEntry& a, const CoverageEntry& b) {
      if (a.pct != b.pct) return a.pct > b.pct;
      return a.value < b.value;
    });
    std::vector<std::string> items;
    for (const auto& e : entries) items.push_back(std::to_string(e.pct) + "% " + e.value);
    sentences.push_back("The area is covered by " + join(items, rules.list_separator) + ".");
  }

  if (!d.rail_lengths_m.empty() || !d.road_lengths_m.empty()) {
    std::vector<std::string> items;
    for (const auto& [value, m] : d.rail_lengths_m) items.push_back(std::to_string(m) + " meters of " + value + " rail");
    for (const auto& [value, m] : d.road_lengths_m) items.push_back(std::to_string(m) + " meters of " + value + " road");
    sentences.push_back("It contains " + join(items, rules.list_separator) + ".");
  }

  return join(sentences, rules.sentence_separator);
}

// Collapses runs of ASCII whitespace to one space and trims both ends.
inline std::string normalize_spaces(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

}  // namespace cartoprompt
