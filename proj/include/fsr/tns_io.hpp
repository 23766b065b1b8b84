#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsr/tensor.hpp"

namespace fsr {

// .tns layout: "TNS1", u8 rank, rank × u32 LE dims, then float32 LE values row-major.
inline constexpr char kTnsMagic[4] = {'T', 'N', 'S', '1'};
inline constexpr std::size_t kTnsMaxRank = 4;

class TnsError : public std::runtime_error {
   public:
    enum class Kind { io, bad_magic, truncated, bad_header };
    TnsError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

   private:
    Kind kind_;
};

std::vector<std::uint8_t> tns_encode(const Tensor& t);
Tensor tns_decode(const std::vector<std::uint8_t>& bytes, const std::string& context = "<memory>");

void tns_write(const std::filesystem::path& path, const Tensor& t);
Tensor tns_read(const std::filesystem::path& path);

}  // namespace fsr
