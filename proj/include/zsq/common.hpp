// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <stdexcept>
#include <string>

namespace zsq {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error("zsq: " + msg); }

}  // namespace zsq

#define ZSQ_CHECK(cond, msg)                 \
  do {                                       \
    if (!(cond)) ::zsq::fail((msg));         \
  } while (0)
