#include "textdestroyer/fixtures.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace textdestroyer {

namespace {

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr const char* kAlphabet = "AEFHKLMNTVXZ";

const std::map<char, std::vector<std::string>>& font() {
  static const std::map<char, std::vector<std::string>> table{
      {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
      {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
      {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
      {'H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
      {'K', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
      {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
      {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
      {'N', {"#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"}},
      {'T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
      {'V', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
      {'X', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}},
      {'Z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
  };
  return table;
}

Image background(std::mt19937_64& rng, int height, int width) {
  std::uniform_real_distribution<double> base(195.0, 225.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> jitter(-3.0, 3.0);
  const double rgb[3] = {base(rng), base(rng), base(rng)};
  const double px = phase(rng);
  const double py = phase(rng);
  Image img(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double wave = 4.0 * std::sin(0.21 * x + px) * std::cos(0.17 * y + py);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c] + wave + jitter(rng);
    }
  }
  return img;
}

}  // namespace

std::vector<std::string> glyph_rows(char letter) {
  const auto& f = font();
  const auto it = f.find(letter);
  return it == f.end() ? std::vector<std::string>(kGlyphH, std::string(kGlyphW, '.')) : it->second;
}

GlyphFixture make_glyph_fixture(std::uint64_t seed, int height, int width) {
  std::mt19937_64 rng(seed);
  GlyphFixture fx;
  fx.image = background(rng, height, width);
  fx.truth = Mask(height, width, 0);

  const int line_count = std::uniform_int_distribution<int>(1, 2)(rng);
  const int scale = line_count == 2 ? 2 : std::uniform_int_distribution<int>(2, 3)(rng);
  const int margin = 6;
  const int line_h = kGlyphH * scale;
  const int gap = 3 * scale;
  const int advance = (kGlyphW + 1) * scale;
  const int max_letters = std::min(4, (width - 2 * margin + scale) / advance);
  const int block_h = line_count * line_h + (line_count - 1) * gap;
  int y = std::uniform_int_distribution<int>(margin, std::max(margin, height - margin - block_h))(rng);

  std::uniform_real_distribution<double> ink(20.0, 60.0);
  std::uniform_real_distribution<double> jitter(-3.0, 3.0);
  const double ink_rgb[3] = {ink(rng), ink(rng), ink(rng)};
  const std::string alphabet = kAlphabet;
  for (int l = 0; l < line_count; ++l) {
    const int letters = std::uniform_int_distribution<int>(2, max_letters)(rng);
    std::string text;
    for (int i = 0; i < letters; ++i) {
      text += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
    }
    const int line_w = letters * advance - scale;
    const int x0 = std::uniform_int_distribution<int>(margin, std::max(margin, width - margin - line_w))(rng);
    for (int i = 0; i < letters; ++i) {
      const auto rows = glyph_rows(text[i]);
      for (int gy = 0; gy < kGlyphH; ++gy) {
        for (int gx = 0; gx < kGlyphW; ++gx) {
          if (rows[gy][gx] != '#') continue;
          for (int sy = 0; sy < scale; ++sy) {
            for (int sx = 0; sx < scale; ++sx) {
              const int py = y + gy * scale + sy;
              const int px = x0 + i * advance + gx * scale + sx;
              if (py >= height || px >= width) continue;
              fx.truth(py, px) = 1;
              for (int c = 0; c < 3; ++c) fx.image.at(py, px, c) = ink_rgb[c] + jitter(rng);
            }
          }
        }
      }
    }
    fx.lines.push_back(text);
    fx.line_boxes.push_back({x0, y, std::min(width, x0 + line_w), std::min(height, y + line_h)});
    y += line_h + gap;
  }
  fx.image = quantize(fx.image);
  return fx;
}

Image make_blank_fixture(std::uint64_t seed, int height, int width) {
  std::mt19937_64 rng(seed);
  return quantize(background(rng, height, width));
}

}  // namespace textdestroyer
