// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#pragma once

#include <stdexcept>
#include <string>

namespace dtnlab {

// All recoverable failures (bad config, malformed input, shape mismatch)
// surface as Error. Callers that need the message format stable (CLI,
// tests) match on the leading "context:" token.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  Error(const std::string& context, const std::string& msg)
      : std::runtime_error(context + ": " + msg) {}
};

[[noreturn]] inline void fail(const std::string& context, const std::string& msg) {
  throw Error(context, msg);
}

inline void require(bool cond, const std::string& context, const std::string& msg) {
  if (!cond) fail(context, msg);
}

}  // namespace dtnlab
