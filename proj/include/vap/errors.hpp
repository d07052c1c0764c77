#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vap {

// Base of the toolkit's error hierarchy. The CLI maps ValidationError to
// exit code 1 and IoError to exit code 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed input line; remembers where it came from.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& msg)
        : ValidationError(source + ":" + std::to_string(line) + ": " + msg),
          line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public ValidationError {
public:
    explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

// A video produced no usable detection box.
class NoDetectionsError : public ValidationError {
public:
    explicit NoDetectionsError(const std::string& video_id)
        : ValidationError("no usable detections for video '" + video_id + "'"),
          video_id_(video_id) {}

    const std::string& video_id() const { return video_id_; }

private:
    std::string video_id_;
};

class EmptyVideoError : public ValidationError {
public:
    explicit EmptyVideoError(const std::string& video_id)
        : ValidationError("video '" + video_id + "' has no frames"),
          video_id_(video_id) {}

    const std::string& video_id() const { return video_id_; }

private:
    std::string video_id_;
};

} // namespace vap
