#include "embedkit/text_format.hpp"

#include "embedkit/errors.hpp"

namespace embedkit {

namespace {

bool replace_all(std::string& s, const std::string& from, const std::string& to) {
    bool any = false;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
        any = true;
    }
    return any;
}

}  // namespace

std::string render_template(const std::string& tmpl, const std::string& content,
                            const std::optional<std::string>& title) {
    std::string out = tmpl;
    replace_all(out, "{title}", title.has_value() ? *title : std::string("none"));
    if (!replace_all(out, "{content}", content)) {
        throw ConfigError("template is missing the {content} placeholder: \"" + tmpl + "\"");
    }
    return out;
}

std::string format_query(const std::string& query_template, const std::string& content) {
    return render_template(query_template, content);
}

std::string format_passage(const std::optional<std::string>& title, const std::string& content) {
    return render_template(kDefaultPassageTemplate, content, title);
}

}  // namespace embedkit
