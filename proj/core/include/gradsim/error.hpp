#pragma once

#include <stdexcept>
#include <string>

namespace gradsim {

/// Argument shapes disagree with the network or with each other.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A file could not be parsed, or parsed into something inconsistent.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class TrainingError : public std::runtime_error {
public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

private:
  std::size_t epoch_;
  std::size_t batch_;
};

} // namespace gradsim
