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

#include <bit>
#include <cstring>
#include <stdexcept>
#include <string>

#include "hierdet/image.hpp"
#include "hierdet/model.hpp"

namespace hierdet {

namespace {

constexpr char kMagic[8] = {'H', 'D', 'E', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kNoLevel = 0xFFFFFFFFu;

template <typename T>
void put_le(std::string& out, T value)
{
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
}

void put_f64(std::string& out, double v)
{
    put_le(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get()
    {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
    std::string get_bytes(std::size_t n)
    {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ParamStore& params)
{
    std::string out(kMagic, sizeof(kMagic));
    put_le(out, kVersion);
    put_le(out, params.config_fingerprint);
    put_le(out, params.trained_level ? static_cast<std::uint32_t>(*params.trained_level) : kNoLevel);
    put_le(out, static_cast<std::uint32_t>(params.tensors().size()));
    for (const auto& [name, t] : params.tensors()) {
        put_le(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_le(out, static_cast<std::uint32_t>(t.shape.size()));
        for (const std::size_t d : t.shape) put_le(out, static_cast<std::uint64_t>(d));
        for (const double v : t.values) put_f64(out, v);
    }
    return out;
}

ParamStore decode_checkpoint(const std::string& bytes)
{
    Reader r(bytes);
    if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
        throw std::runtime_error("not a checkpoint file");
    }
    if (const auto version = r.get<std::uint32_t>(); version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    ParamStore p;
    p.config_fingerprint = r.get<std::uint64_t>();
    const auto level = r.get<std::uint32_t>();
    if (level != kNoLevel) {
        if (level > 2) throw std::runtime_error("checkpoint has invalid hierarchy level");
        p.trained_level = static_cast<HierarchyLevel>(level);
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.get_bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw std::runtime_error("tensor " + name + " has implausible rank");
        std::vector<std::size_t> shape;
        for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
        Tensor t(shape);
        for (double& v : t.values) v = r.get_f64();
        p.add(std::move(name), std::move(t));
    }
    if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint");
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params)
{
    write_file(path, encode_checkpoint(params));
}

ParamStore load_checkpoint(const std::filesystem::path& path)
{
    return decode_checkpoint(read_file(path));
}

}  // namespace hierdet
