#pragma once

#include <stdexcept>
#include <string>

namespace epan {

// Shape/axis disagreements between tensors or images.
class dimension_error : public std::runtime_error {
public:
    explicit dimension_error(const std::string& msg) : std::runtime_error(msg) {}
};

// An argument value outside its documented domain (sigma <= 0, even kernel size, ...).
class parameter_error : public std::runtime_error {
public:
    explicit parameter_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A broken call contract (non-scalar loss, missing gradient, missing EEN features).
class contract_error : public std::runtime_error {
public:
    explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

// An inconsistent model/training configuration.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad dataset contents (unknown scenario id, crop larger than source, empty split).
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Search/crop geometry that cannot be satisfied.
class geometry_error : public std::runtime_error {
public:
    explicit geometry_error(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O and container format problems; message carries the path.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unrecoverable training failure (non-finite loss).
class training_error : public std::runtime_error {
public:
    explicit training_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace epan
