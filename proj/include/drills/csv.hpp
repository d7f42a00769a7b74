#pragma once

#include <charconv>
#include <ostream>
#include <stdexcept>
#include <string>

namespace drills {

/// Shortest round-trip decimal form, locale-independent (no thousands
/// separators, '.' decimal point). All CSV output goes through this.
inline std::string fmt_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw std::runtime_error("fmt_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline std::string fmt_long(long long v) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace drills
