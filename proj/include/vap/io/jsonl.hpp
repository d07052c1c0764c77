#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <utility>

#include <json.hpp>

#include "vap/errors.hpp"

namespace vap::io {

using json = nlohmann::ordered_json;

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    return in;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::string out((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    return out;
}

// Calls fn(line_number, parsed_json) for every non-empty line. Line numbers
// are 1-based. Malformed JSON raises ParseError naming the offending line.
template <typename Fn>
void for_each_json_line(std::istream& in, const std::string& source, Fn&& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!record.is_object()) {
            throw ParseError(source, line_no, "expected a JSON object");
        }
        fn(line_no, record);
    }
}

template <typename Fn>
void for_each_json_line_in_file(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in = open_input(path);
    for_each_json_line(in, path.string(), std::forward<Fn>(fn));
}

inline const json& require_field(const json& j, const char* key,
                                 const std::string& source, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ParseError(source, line, std::string("missing field '") + key + "'");
    }
    return *it;
}

inline std::string require_string(const json& j, const char* key,
                                  const std::string& source, std::size_t line) {
    const json& v = require_field(j, key, source, line);
    if (!v.is_string()) {
        throw ParseError(source, line, std::string("field '") + key + "' must be a string");
    }
    return v.get<std::string>();
}

inline double require_number(const json& j, const char* key,
                             const std::string& source, std::size_t line) {
    const json& v = require_field(j, key, source, line);
    if (!v.is_number()) {
        throw ParseError(source, line, std::string("field '") + key + "' must be a number");
    }
    return v.get<double>();
}

inline std::int64_t require_int(const json& j, const char* key,
                                const std::string& source, std::size_t line) {
    const json& v = require_field(j, key, source, line);
    if (!v.is_number_integer()) {
        throw ParseError(source, line, std::string("field '") + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
}

// Write-temp-then-rename file writer so a crashed stage never leaves a
// truncated output behind.
class AtomicFileWriter {
public:
    explicit AtomicFileWriter(std::filesystem::path path)
        : path_(std::move(path)), tmp_(path_.string() + ".tmp") {
        if (path_.has_parent_path()) {
            std::error_code ec;
            std::filesystem::create_directories(path_.parent_path(), ec);
        }
        out_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!out_) {
            throw IoError("cannot open '" + tmp_.string() + "' for writing");
        }
    }

    AtomicFileWriter(const AtomicFileWriter&) = delete;
    AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;

    ~AtomicFileWriter() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

    std::ostream& stream() { return out_; }

    void write_line(const std::string& line) {
        out_ << line << '\n';
    }

    void commit() {
        out_.flush();
        if (!out_) {
            throw IoError("write to '" + tmp_.string() + "' failed");
        }
        out_.close();
        std::error_code ec;
        std::filesystem::rename(tmp_, path_, ec);
        if (ec) {
            throw IoError("cannot rename '" + tmp_.string() + "' to '" +
                          path_.string() + "': " + ec.message());
        }
        committed_ = true;
    }

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

} // namespace vap::io
