/* Copyright 2026 The HierDet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "hierdet/image.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hierdet {

RgbImage RgbImage::from_gray(const GrayImage& g)
{
    RgbImage out(g.width, g.height);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = g.pixels[i];
    }
    return out;
}

std::array<std::uint8_t, 3> RgbImage::get(int x, int y) const
{
    const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
    return {pixels[o], pixels[o + 1], pixels[o + 2]};
}

void RgbImage::set(int x, int y, std::array<std::uint8_t, 3> c)
{
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
    pixels[o] = c[0];
    pixels[o + 1] = c[1];
    pixels[o + 2] = c[2];
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

namespace {

/// Reads the next header token of a netpbm file, skipping whitespace and comments.
std::string next_token(const std::string& bytes, std::size_t& pos)
{
    for (;;) {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (pos < bytes.size() && bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) tok += bytes[pos++];
    if (tok.empty()) throw std::runtime_error("truncated netpbm header");
    return tok;
}

int parse_positive(const std::string& tok)
{
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::runtime_error("bad netpbm header value '" + tok + "'");
    return v;
}

}  // namespace

std::string encode_pgm(const GrayImage& img)
{
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

GrayImage decode_pgm(const std::string& bytes)
{
    std::size_t pos = 0;
    const std::string magic = next_token(bytes, pos);
    if (magic != "P5" && magic != "P2") throw std::runtime_error("not a PGM file (magic " + magic + ")");
    const int w = parse_positive(next_token(bytes, pos));
    const int h = parse_positive(next_token(bytes, pos));
    const int maxval = parse_positive(next_token(bytes, pos));
    if (maxval > 255) throw std::runtime_error("16-bit PGM is not supported");

    GrayImage img(w, h);
    const auto rescale = [maxval](int v) {
        return static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
    };
    if (magic == "P5") {
        ++pos;  // single whitespace after maxval
        if (bytes.size() < pos + img.pixels.size()) throw std::runtime_error("truncated PGM raster");
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            img.pixels[i] = rescale(static_cast<unsigned char>(bytes[pos + i]));
        }
    } else {
        for (auto& p : img.pixels) {
            const int v = std::stoi(next_token(bytes, pos));
            if (v < 0 || v > maxval) throw std::runtime_error("PGM sample out of range");
            p = rescale(v);
        }
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img)
{
    write_file(path, encode_pgm(img));
}

GrayImage read_pgm(const std::filesystem::path& path)
{
    return decode_pgm(read_file(path));
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img)
{
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    write_file(path, out);
}

RgbImage read_ppm(const std::filesystem::path& path)
{
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    if (next_token(bytes, pos) != "P6") throw std::runtime_error("not a binary PPM file");
    const int w = parse_positive(next_token(bytes, pos));
    const int h = parse_positive(next_token(bytes, pos));
    if (parse_positive(next_token(bytes, pos)) != 255) throw std::runtime_error("PPM maxval must be 255");
    ++pos;
    RgbImage img(w, h);
    if (bytes.size() < pos + img.pixels.size()) throw std::runtime_error("truncated PPM raster");
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]);
    return img;
}

}  // namespace hierdet
