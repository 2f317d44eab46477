/**
 * Copyright 2026 The cdpsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CDPSIM_ERROR_HPP_
#define CDPSIM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cdpsim {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input document or configuration. `field` is a JSON-pointer-like path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string &what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string &field() const { return field_; }

 private:
  std::string field_;
};

// A generic update rule that asks for parameters before they can exist.
class InfeasibleRuleError : public Error {
 public:
  InfeasibleRuleError(int micro_batch, int stage, const std::string &what)
      : Error(what), micro_batch_(micro_batch), stage_(stage) {}
  int micro_batch() const { return micro_batch_; }
  int stage() const { return stage_; }

 private:
  int micro_batch_;
  int stage_;
};

// Non-finite values in the numerical engine. `step` is 0 when not applicable.
class DivergenceError : public Error {
 public:
  DivergenceError(long step, int stage, const std::string &what)
      : Error(what), step_(step), stage_(stage) {}
  long step() const { return step_; }
  int stage() const { return stage_; }

 private:
  long step_;
  int stage_;
};

// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdpsim

#endif  // CDPSIM_ERROR_HPP_
