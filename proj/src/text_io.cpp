#include "lhfglp/text_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace lhfglp::text {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void Reader::fail(const std::string& msg, std::size_t at) const { throw ParseError(msg, at); }

void Reader::skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r'))
        ++pos_;
}

std::string_view Reader::line(const char* what) {
    if (pos_ >= text_.size()) fail(std::string("unexpected end of input, expected ") + what, pos_);
    const std::size_t start = pos_;
    const std::size_t end = text_.find('\n', pos_);
    const std::size_t stop = end == std::string_view::npos ? text_.size() : end;
    pos_ = end == std::string_view::npos ? text_.size() : end + 1;
    std::string_view out = text_.substr(start, stop - start);
    if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
    return out;
}

std::string_view Reader::token(const char* what) {
    skip_space();
    if (pos_ >= text_.size()) fail(std::string("unexpected end of input, expected ") + what, pos_);
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ' ' && text_[pos_] != '\t' &&
           text_[pos_] != '\n' && text_[pos_] != '\r')
        ++pos_;
    return text_.substr(start, pos_ - start);
}

void Reader::expect(std::string_view literal) {
    const std::size_t at = pos_;
    std::string_view tok = token(std::string(literal).c_str());
    if (tok != literal)
        fail("expected '" + std::string(literal) + "', found '" + std::string(tok) + "'", at);
}

std::uint64_t Reader::u64(const char* what) {
    skip_space();
    const std::size_t at = pos_;
    std::string_view tok = token(what);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        fail(std::string("malformed integer for ") + what + ": '" + std::string(tok) + "'", at);
    return v;
}

std::uint64_t Reader::hex_u64(const char* what) {
    skip_space();
    const std::size_t at = pos_;
    std::string_view tok = token(what);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, 16);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        fail(std::string("malformed hex value for ") + what + ": '" + std::string(tok) + "'", at);
    return v;
}

double Reader::f64(const char* what) {
    skip_space();
    const std::size_t at = pos_;
    std::string_view tok = token(what);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        fail(std::string("malformed number for ") + what + ": '" + std::string(tok) + "'", at);
    return v;
}

bool Reader::at_end() {
    skip_space();
    return pos_ >= text_.size();
}

void Reader::expect_end() {
    if (!at_end()) fail("trailing data", pos_);
}

}  // namespace lhfglp::text
