#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "srcmix/errors.hpp"
#include "srcmix/matrix.hpp"
#include "srcmix/textio.hpp"

namespace srcmix {

/// Line-oriented decimal-text container for model parameters.
///
///   srcmix-params 1
///   item scalar <name>          + 1 line: value
///   item vector <name> <n>      + 1 line: n values
///   item matrix <name> <r> <c>  + r lines: c values each (row-major)
///   item string <name>          + 1 line: raw text
///   item strings <name> <n>     + n lines: raw text
///
/// Floats are written in the shortest form that parses back to the same
/// binary double. Item names are dotted paths ("mixer.proj.0"); writers emit
/// them in a fixed order so equal parameters give byte-identical files.
class ParamWriter {
 public:
  explicit ParamWriter(std::ostream& out) : out_(out) { out_ << "srcmix-params 1\n"; }

  void scalar(const std::string& name, double v) {
    out_ << "item scalar " << name << '\n' << format_double(v) << '\n';
  }

  void vector(const std::string& name, const Vector& v) {
    out_ << "item vector " << name << ' ' << v.size() << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out_ << ' ';
      out_ << format_double(v[i]);
    }
    out_ << '\n';
  }

  void matrix(const std::string& name, const Matrix& m) {
    out_ << "item matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        if (c) out_ << ' ';
        out_ << format_double(m(r, c));
      }
      out_ << '\n';
    }
  }

  void string(const std::string& name, const std::string& v) {
    out_ << "item string " << name << '\n' << v << '\n';
  }

  void strings(const std::string& name, const std::vector<std::string>& v) {
    out_ << "item strings " << name << ' ' << v.size() << '\n';
    for (const auto& s : v) out_ << s << '\n';
  }

 private:
  std::ostream& out_;
};

/// Parses a whole file into name-keyed maps, then hands out items by name.
class ParamReader {
 public:
  explicit ParamReader(std::istream& in) { parse(in); }

  bool has(const std::string& name) const {
    return scalars_.count(name) || vectors_.count(name) || matrices_.count(name) ||
           strings_.count(name) || string_lists_.count(name);
  }

  double scalar(const std::string& name) const { return find(scalars_, name, "scalar"); }
  const Vector& vector(const std::string& name) const { return find(vectors_, name, "vector"); }
  const Matrix& matrix(const std::string& name) const { return find(matrices_, name, "matrix"); }
  const std::string& string(const std::string& name) const {
    return find(strings_, name, "string");
  }
  const std::vector<std::string>& strings(const std::string& name) const {
    return find(string_lists_, name, "strings");
  }

 private:
  template <typename M>
  static const typename M::mapped_type& find(const M& m, const std::string& name,
                                             const char* kind) {
    auto it = m.find(name);
    if (it == m.end())
      throw ParseError(std::string("parameter file: missing ") + kind + " '" + name + "'");
    return it->second;
  }

  void parse(std::istream& in);
  std::string next_line(std::istream& in);

  std::map<std::string, double> scalars_;
  std::map<std::string, Vector> vectors_;
  std::map<std::string, Matrix> matrices_;
  std::map<std::string, std::string> strings_;
  std::map<std::string, std::vector<std::string>> string_lists_;
  std::size_t line_no_ = 0;
};

inline std::string ParamReader::next_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("parameter file: unexpected end of file after line " +
                     std::to_string(line_no_));
  ++line_no_;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline void ParamReader::parse(std::istream& in) {
  std::string line = next_line(in);
  if (line != "srcmix-params 1")
    throw ParseError("parameter file: bad header '" + line + "'");
  while (std::getline(in, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_whitespace(line);
    if (f.size() < 3 || f[0] != "item")
      throw ParseError("parameter file line " + std::to_string(line_no_) +
                       ": expected 'item <kind> <name> ...'");
    const std::string& kind = f[1];
    const std::string& name = f[2];
    unsigned long long a = 0, b = 0;
    if (kind == "scalar") {
      double v;
      const std::string body = next_line(in);
      if (!parse_double(strip(body), &v))
        throw ParseError("parameter file line " + std::to_string(line_no_) +
                         ": bad scalar value");
      scalars_[name] = v;
    } else if (kind == "vector") {
      if (f.size() != 4 || !parse_u64(f[3], &a))
        throw ParseError("parameter file line " + std::to_string(line_no_) +
                         ": bad vector header");
      const std::vector<std::string> vals = split_whitespace(next_line(in));
      if (vals.size() != a)
        throw ParseError("parameter file line " + std::to_string(line_no_) + ": vector '" +
                         name + "' expected " + std::to_string(a) + " values");
      Vector v(a);
      for (std::size_t i = 0; i < a; ++i)
        if (!parse_double(vals[i], &v[i]))
          throw ParseError("parameter file line " + std::to_string(line_no_) +
                           ": bad number in vector '" + name + "'");
      vectors_[name] = std::move(v);
    } else if (kind == "matrix") {
      if (f.size() != 5 || !parse_u64(f[3], &a) || !parse_u64(f[4], &b))
        throw ParseError("parameter file line " + std::to_string(line_no_) +
                         ": bad matrix header");
      Matrix m(a, b);
      for (std::size_t r = 0; r < a; ++r) {
        const std::vector<std::string> vals = split_whitespace(next_line(in));
        if (vals.size() != b)
          throw ParseError("parameter file line " + std::to_string(line_no_) + ": matrix '" +
                           name + "' row " + std::to_string(r) + " expected " +
                           std::to_string(b) + " values");
        for (std::size_t c = 0; c < b; ++c)
          if (!parse_double(vals[c], &m(r, c)))
            throw ParseError("parameter file line " + std::to_string(line_no_) +
                             ": bad number in matrix '" + name + "'");
      }
      matrices_[name] = std::move(m);
    } else if (kind == "string") {
      strings_[name] = next_line(in);
    } else if (kind == "strings") {
      if (f.size() != 4 || !parse_u64(f[3], &a))
        throw ParseError("parameter file line " + std::to_string(line_no_) +
                         ": bad strings header");
      std::vector<std::string> v(a);
      for (std::size_t i = 0; i < a; ++i) v[i] = next_line(in);
      string_lists_[name] = std::move(v);
    } else {
      throw ParseError("parameter file line " + std::to_string(line_no_) +
                       ": unknown item kind '" + kind + "'");
    }
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace srcmix
