//! Parser for the "As a <role>, I want <feature>, so that <reason>" template.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateParts {
    /// Article before the role as written ("a", "an" or "the").
    pub article: String,
    pub role: String,
    pub feature: String,
    pub reason: Option<String>,
}

impl TemplateParts {
    /// Canonical sentence rebuilt from the parts.
    pub fn reconstruct(&self) -> String {
        let mut s = format!(
            "As {} {}, I want to {}",
            self.article, self.role, self.feature
        );
        if let Some(reason) = &self.reason {
            s.push_str(", so that ");
            s.push_str(reason);
        }
        s
    }
}

/// Outcome of template parsing; a sentence outside the template is a value, not an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateMatch {
    Matched(TemplateParts),
    NoMatch,
}

impl TemplateMatch {
    pub fn parts(&self) -> Option<&TemplateParts> {
        match self {
            TemplateMatch::Matched(p) => Some(p),
            TemplateMatch::NoMatch => None,
        }
    }
}

const ROLE_PREFIXES: [&str; 3] = ["as an ", "as a ", "as the "];
const WANT_MARKERS: [&str; 3] = ["i want", "i'm able to", "i am able to"];
const REASON_MARKER: &str = "so that ";

pub fn parse_template(text: &str) -> TemplateMatch {
    let trimmed = text.trim().trim_end_matches(['.', '!', ' ']);
    // ASCII lowercasing keeps byte offsets aligned with the original.
    let lower = trimmed.to_ascii_lowercase();

    let Some(prefix) = ROLE_PREFIXES.iter().find(|p| lower.starts_with(*p)) else {
        return TemplateMatch::NoMatch;
    };

    let role_start = prefix.len();
    let Some((want_at, want_len)) = find_want(&lower, role_start) else {
        return TemplateMatch::NoMatch;
    };
    let role = clean(&trimmed[role_start..want_at]);
    let article = prefix[3..prefix.len() - 1].to_string();

    let mut feature_start = want_at + want_len;
    if lower[feature_start..].starts_with(" to ") {
        feature_start += 3;
    }
    let rest_lower = &lower[feature_start..];
    let (feature, reason) = match find_word(rest_lower, REASON_MARKER) {
        Some(at) => {
            let feature = clean(&trimmed[feature_start..feature_start + at]);
            let reason = clean(&trimmed[feature_start + at + REASON_MARKER.len()..]);
            (feature, Some(reason).filter(|r| !r.is_empty()))
        }
        None => (clean(&trimmed[feature_start..]), None),
    };

    if role.is_empty() || feature.is_empty() {
        return TemplateMatch::NoMatch;
    }
    TemplateMatch::Matched(TemplateParts {
        article,
        role,
        feature,
        reason,
    })
}

/// Earliest want-marker preceded by a space or comma.
fn find_want(lower: &str, from: usize) -> Option<(usize, usize)> {
    WANT_MARKERS
        .iter()
        .filter_map(|m| find_word(&lower[from..], m).map(|at| (from + at, m.len())))
        .min_by_key(|&(at, _)| at)
}

/// Finds `needle` at a word boundary (start of text or after space/comma).
fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    let mut offset = 0;
    while let Some(found) = haystack[offset..].find(needle) {
        let at = offset + found;
        let boundary_before = at == 0
            || matches!(haystack.as_bytes()[at - 1], b' ' | b',');
        let end = at + needle.len();
        let boundary_after = needle.ends_with(' ')
            || end == haystack.len()
            || matches!(haystack.as_bytes()[end], b' ' | b',');
        if boundary_before && boundary_after {
            return Some(at);
        }
        offset = at + 1;
    }
    None
}

fn clean(s: &str) -> String {
    s.trim().trim_matches(',').trim().to_string()
}

/// Lowercase, comma-free, whitespace-collapsed form used to compare sentences.
pub fn normalize_sentence(s: &str) -> String {
    s.to_lowercase()
        .replace(',', " ")
        .trim_end_matches(['.', ' '])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(text: &str) -> TemplateParts {
        parse_template(text).parts().cloned().expect("template match")
    }

    #[test]
    fn site_member_story() {
        let p = parts(
            "As a site member, I want to access to the Facebook profiles of other members so that I can share my experiences with them",
        );
        assert_eq!(p.role, "site member");
        assert_eq!(p.feature, "access to the Facebook profiles of other members");
        assert_eq!(
            p.reason.as_deref(),
            Some("I can share my experiences with them")
        );
    }

    #[test]
    fn story_without_reason() {
        let p = parts("As a Data user, I want to have the 12-19-2017 deletions processed.");
        assert_eq!(p.role, "Data user");
        assert_eq!(p.feature, "have the 12-19-2017 deletions processed");
        assert_eq!(p.reason, None);
    }

    #[test]
    fn non_template_sentence() {
        assert_eq!(parse_template("The system shall log events."), TemplateMatch::NoMatch);
        assert_eq!(parse_template("As a user"), TemplateMatch::NoMatch);
    }

    #[test]
    fn tolerated_variants() {
        let p = parts("as an Admin I want export logs so that auditors can review them");
        assert_eq!(p.role, "Admin");
        assert_eq!(p.feature, "export logs");
        let p = parts("As the archivist, I'm able to tag records, so that search works.");
        assert_eq!(p.role, "archivist");
        assert_eq!(p.feature, "tag records");
        assert_eq!(p.reason.as_deref(), Some("search works"));
        let p = parts("AS A MANAGER, I WANT TO SEE REPORTS");
        assert_eq!(p.role, "MANAGER");
        assert_eq!(p.feature, "SEE REPORTS");
    }

    #[test]
    fn want_inside_role_word_is_not_a_marker() {
        let p = parts("As a wizard i wanted, I want to cast");
        assert_eq!(p.role, "wizard i wanted");
        assert_eq!(p.feature, "cast");
    }

    #[test]
    fn reconstruction_matches_normalized_text() {
        let text = "As a UI designer, I want to redesign the Resources page, so that it matches the new Broker design styles.";
        let p = parts(text);
        assert_eq!(normalize_sentence(&p.reconstruct()), normalize_sentence(text));
    }
}
