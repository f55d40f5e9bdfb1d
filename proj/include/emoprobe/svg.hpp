#pragma once

#include <string>
#include <string_view>

namespace emoprobe {

/// Minimal SVG builder with fixed two-decimal coordinates so output is byte-stable.
class SvgDocument {
 public:
  SvgDocument(double width, double height);

  void rect(double x, double y, double w, double h, std::string_view fill,
            std::string_view stroke = "none");
  void circle(double cx, double cy, double r, std::string_view fill,
              std::string_view stroke = "none", double stroke_width = 1.0);
  void line(double x1, double y1, double x2, double y2, std::string_view stroke,
            double stroke_width = 1.0, std::string_view dash = {});
  void text(double x, double y, std::string_view content, double font_size = 12.0,
            std::string_view fill = "#000000", std::string_view anchor = "middle");
  void comment(std::string_view content);

  std::string str() const;

 private:
  double width_, height_;
  std::string body_;
};

/// Escapes &, <, >, " for XML text and attributes.
std::string xml_escape(std::string_view s);

}  // namespace emoprobe
