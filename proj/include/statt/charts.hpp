#pragma once

#include <string>
#include <vector>

namespace statt::charts {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Comma-separated, no quoting. Throws IoError on ragged rows.
Csv parse_csv(const std::string& text);

/// Line chart of mean F1 against noise fraction, one series per mode, from
/// the text of a sweep CSV.
std::string sweep_svg(const std::string& sweep_csv);

/// Bar chart of attention weight per time step from a `t,alpha_mean,...`
/// CSV; one bar group per column after `t`.
std::string attention_svg(const std::string& attention_csv);

}  // namespace statt::charts
