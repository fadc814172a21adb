#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/core/hash.hpp"
#include "difnav/core/text.hpp"
#include "difnav/navsim/grid.hpp"

namespace difnav::navsim {

/// Text form: "cells W H cell_size", then H rows top (largest y) first.
inline std::string format_scene(const GridWorld& g) {
  std::string s = "cells " + std::to_string(g.width) + " " + std::to_string(g.height) + " " +
                  format_double(g.cell_size) + "\n";
  for (int r = 0; r < g.height; ++r) {
    const int y = g.height - 1 - r;
    for (int x = 0; x < g.width; ++x) {
      const Cell c{x, y};
      const int lm = g.landmark_at(c);
      s += g.occupied[g.index(c)] ? '#' : (lm >= 0 ? landmark_letter(lm) : '.');
    }
    s += '\n';
  }
  return s;
}

inline GridWorld parse_scene(std::string_view text, Category category = Category::kOpenArea) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw FormatError("empty scene file");
  const auto head = split_words(lines[0]);
  if (head.size() != 4 || head[0] != "cells") throw FormatError("scene header must be 'cells W H cell_size'");
  const long long w = parse_int(head[1], "scene width"), h = parse_int(head[2], "scene height");
  const double cs = parse_double(head[3], "cell size");
  if (w < 3 || h < 3 || w > 4096 || h > 4096 || !(cs > 0)) throw FormatError("scene dimensions out of range");
  if (static_cast<long long>(lines.size()) != h + 1) throw FormatError("scene has wrong number of rows");
  GridWorld g(static_cast<int>(w), static_cast<int>(h), category, cs);
  for (int r = 0; r < g.height; ++r) {
    const std::string& row = lines[static_cast<std::size_t>(r) + 1];
    if (static_cast<long long>(row.size()) != w) throw FormatError("scene row " + std::to_string(r) + " has wrong width");
    const int y = g.height - 1 - r;
    for (int x = 0; x < g.width; ++x) {
      const char ch = row[static_cast<std::size_t>(x)];
      const std::size_t i = g.index({x, y});
      if (ch == '#') {
        g.occupied[i] = 1;
      } else if (ch == '.') {
        g.occupied[i] = 0;
      } else if (ch >= 'A' && ch <= 'Z') {
        g.occupied[i] = 0;
        g.landmark[i] = static_cast<std::int8_t>(ch - 'A');
      } else {
        throw FormatError(std::string("unexpected scene character '") + ch + "'");
      }
    }
  }
  g.validate();
  return g;
}

inline void save_scene(const std::filesystem::path& path, const GridWorld& g) { write_text_file(path, format_scene(g)); }

inline GridWorld load_scene(const std::filesystem::path& path, Category category = Category::kOpenArea) {
  return parse_scene(read_text_file(path), category);
}

/// One line of an episode file.
struct EpisodeRecord {
  std::string scene_path;
  Pose start;
  Vec2 goal;
  std::vector<std::string> tokens;
  bool operator==(const EpisodeRecord&) const = default;
};

inline std::string format_episode(const EpisodeRecord& e) {
  std::string toks;
  for (std::size_t i = 0; i < e.tokens.size(); ++i) toks += (i ? " " : "") + e.tokens[i];
  return e.scene_path + "," + format_double(e.start.position.x) + "," + format_double(e.start.position.y) + "," +
         std::to_string(e.start.heading_index * 15) + "," + format_double(e.goal.x) + "," + format_double(e.goal.y) +
         "," + toks;
}

inline EpisodeRecord parse_episode(std::string_view line) {
  const auto f = split(line, ',');
  if (f.size() != 7) throw FormatError("episode line needs 7 comma-separated fields: '" + std::string(line) + "'");
  EpisodeRecord e;
  e.scene_path = std::string(trim(f[0]));
  const double deg = parse_double(f[3], "start heading");
  e.start = Pose(parse_double(f[1], "start x"), parse_double(f[2], "start y"), static_cast<int>(std::lround(deg / 15.0)));
  e.goal = {parse_double(f[4], "goal x"), parse_double(f[5], "goal y")};
  e.tokens = split_words(f[6]);
  return e;
}

inline std::string format_episodes(const std::vector<EpisodeRecord>& eps) {
  std::string s;
  for (const auto& e : eps) s += format_episode(e) + "\n";
  return s;
}

inline std::vector<EpisodeRecord> parse_episodes(std::string_view text) {
  std::vector<EpisodeRecord> out;
  for (const auto& l : split_lines(text))
    if (!trim(l).empty()) out.push_back(parse_episode(l));
  return out;
}

}  // namespace difnav::navsim
