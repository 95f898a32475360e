#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace veta {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Quaternions are stored (w, x, y, z).
using Quat = Eigen::Vector4d;

// Single-channel image, indexed img(row, col) == img(y, x).
using Image = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class MissingFile : public IoError {
public:
    explicit MissingFile(const std::string& path)
        : IoError("missing file: " + path), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class FormatError : public IoError {
public:
    using IoError::IoError;
};

class UnsupportedFormat : public FormatError {
public:
    using FormatError::FormatError;
};

class CorruptFile : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionMismatch : public FormatError {
public:
    using FormatError::FormatError;
};

class TrainingDiverged : public Error {
public:
    using Error::Error;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeMismatch(std::string(what) + ": image shapes differ (" +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

}  // namespace veta
