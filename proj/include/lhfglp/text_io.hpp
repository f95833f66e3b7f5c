#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "lhfglp/dataset.hpp"

namespace lhfglp::text {

/// 17 significant digits: parses back to the identical double.
std::string format_double(double v);

/// Whitespace tokenizer over a text buffer that reports byte offsets in
/// every ParseError.
class Reader {
 public:
    explicit Reader(std::string_view text) : text_(text) {}

    /// Reads the rest of the current line (without the newline).
    std::string_view line(const char* what);
    std::string_view token(const char* what);
    void expect(std::string_view literal);
    std::uint64_t u64(const char* what);
    double f64(const char* what);
    std::uint64_t hex_u64(const char* what);

    bool at_end();
    void expect_end();
    std::size_t offset() const { return pos_; }

 private:
    void skip_space();
    [[noreturn]] void fail(const std::string& msg, std::size_t at) const;

    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace lhfglp::text
