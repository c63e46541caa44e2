#pragma once

#include <stdexcept>
#include <string>

namespace neuroagent::volume {

class VolumeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, truncated data, inconsistent header).
class FormatError : public VolumeError {
public:
    using VolumeError::VolumeError;
};

// Well-formed but outside the supported subset (dtype, orientation).
class UnsupportedError : public VolumeError {
public:
    using VolumeError::VolumeError;
};

class IoError : public VolumeError {
public:
    using VolumeError::VolumeError;
};

class InterpolationError : public VolumeError {
public:
    using VolumeError::VolumeError;
};

class TransformError : public VolumeError {
public:
    using VolumeError::VolumeError;
};

class GridError : public VolumeError {
public:
    using VolumeError::VolumeError;
};

}  // namespace neuroagent::volume
