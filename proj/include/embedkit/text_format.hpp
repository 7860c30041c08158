#pragma once

#include <optional>
#include <string>

namespace embedkit {

// Default prompt templates. Non-retrieval templates are configuration, not
// code; these are the retrieval defaults.
inline const char* kDefaultQueryTemplate = "task: search result | query: {content}";
inline const char* kDefaultPassageTemplate = "title: {title} | text: {content}";

// Substitutes {content} (required) and {title} (optional; absent title maps
// to "none", an empty title stays empty).
std::string render_template(const std::string& tmpl, const std::string& content,
                            const std::optional<std::string>& title = std::nullopt);

std::string format_query(const std::string& query_template, const std::string& content);
std::string format_passage(const std::optional<std::string>& title, const std::string& content);

}  // namespace embedkit
