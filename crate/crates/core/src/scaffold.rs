//! Search-app scaffolding from templates, and publishing apps as spaces.
//!
//! A template is a directory with a `template.json` descriptor. Files ending
//! in `.tmpl` have `{{ key }}` placeholders substituted (and lose the suffix);
//! other files are copied verbatim. Placeholders in file and directory names
//! are substituted too. Values are JSON-escaped in `.json` outputs and
//! HTML-escaped in `.html` outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{archive, validate_name, RegistryClient, RegistryLocation};

pub const DESCRIPTOR_FILE: &str = "template.json";
pub const TEMPLATE_SUFFIX: &str = ".tmpl";
pub const APP_CONFIG_FILE: &str = "config.json";
/// Environment variable holding extra template directories (path-list syntax).
pub const TEMPLATE_PATH_ENV: &str = "PLUGSEARCH_TEMPLATES";
/// Context key naming the app directory created under the output directory.
pub const APP_DIR_KEY: &str = "local_app";

const VANILLA: &[(&str, &str)] = &[
    (DESCRIPTOR_FILE, include_str!("../templates/vanilla/template.json")),
    ("app.js", include_str!("../templates/vanilla/app.js")),
    ("config.json.tmpl", include_str!("../templates/vanilla/config.json.tmpl")),
    ("index.html.tmpl", include_str!("../templates/vanilla/index.html.tmpl")),
    ("style.css", include_str!("../templates/vanilla/style.css")),
];

pub type TemplateContext = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateDescriptor {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub required_keys: Vec<String>,
    #[serde(default)]
    pub optional_keys: BTreeMap<String, String>,
}

impl TemplateDescriptor {
    fn declares(&self, key: &str) -> bool {
        self.required_keys.iter().any(|k| k == key) || self.optional_keys.contains_key(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateOrigin {
    Builtin,
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateInfo {
    pub descriptor: TemplateDescriptor,
    pub origin: TemplateOrigin,
}

/// A loaded template: descriptor plus every file except the descriptor.
#[derive(Debug, Clone)]
pub struct Template {
    pub descriptor: TemplateDescriptor,
    pub origin: TemplateOrigin,
    files: BTreeMap<String, Vec<u8>>,
}

fn parse_descriptor(bytes: &[u8], source: &str) -> Result<TemplateDescriptor> {
    let descriptor: TemplateDescriptor =
        serde_json::from_slice(bytes).map_err(|e| Error::Template(format!("{source}: {e}")))?;
    if descriptor.name.is_empty() {
        return Err(Error::Template(format!("{source}: empty template name")));
    }
    if !descriptor.required_keys.iter().any(|k| k == APP_DIR_KEY) {
        return Err(Error::Template(format!(
            "{source}: {APP_DIR_KEY} must be a required key"
        )));
    }
    Ok(descriptor)
}

impl Template {
    pub fn builtin(name: &str) -> Option<Template> {
        (name == "vanilla").then(|| {
            let mut files: BTreeMap<String, Vec<u8>> = VANILLA
                .iter()
                .map(|(path, content)| (path.to_string(), content.as_bytes().to_vec()))
                .collect();
            let descriptor_bytes = files.remove(DESCRIPTOR_FILE).expect("descriptor embedded");
            let descriptor = parse_descriptor(&descriptor_bytes, "builtin vanilla").expect("builtin descriptor is valid");
            Template {
                descriptor,
                origin: TemplateOrigin::Builtin,
                files,
            }
        })
    }

    pub fn from_dir(dir: &Path) -> Result<Template> {
        let mut files = archive::collect_tree(dir)?;
        let descriptor_bytes = files
            .remove(DESCRIPTOR_FILE)
            .ok_or_else(|| Error::Template(format!("{} has no {DESCRIPTOR_FILE}", dir.display())))?;
        let descriptor = parse_descriptor(&descriptor_bytes, &dir.display().to_string())?;
        Ok(Template {
            descriptor,
            origin: TemplateOrigin::Directory(dir.to_path_buf()),
            files,
        })
    }

    /// Resolve `name` against the search paths first, then the built-ins.
    pub fn find(name: &str, search_paths: &[PathBuf]) -> Result<Template> {
        for info in user_templates(search_paths) {
            if info.descriptor.name == name {
                if let TemplateOrigin::Directory(dir) = &info.origin {
                    return Template::from_dir(dir);
                }
            }
        }
        Template::builtin(name).ok_or_else(|| Error::TemplateNotFound(name.to_string()))
    }

    /// Render into `name → bytes` relative to the app directory.
    pub fn render(&self, context: &TemplateContext) -> Result<BTreeMap<String, Vec<u8>>> {
        let values = self.resolve_context(context)?;
        let mut out = BTreeMap::new();
        for (path, bytes) in &self.files {
            let rendered_path = render_path(path, &values, &self.descriptor)?;
            let (target, content) = match rendered_path.strip_suffix(TEMPLATE_SUFFIX) {
                Some(stripped) => {
                    let text = std::str::from_utf8(bytes)
                        .map_err(|_| Error::Template(format!("{path} is not UTF-8")))?;
                    let escape = Escape::for_path(stripped);
                    let rendered = substitute(text, &|key| {
                        lookup(key, &values, &self.descriptor, path).map(|v| escape.apply(v))
                    })?;
                    (stripped.to_string(), rendered.into_bytes())
                }
                None => (rendered_path, bytes.clone()),
            };
            if out.insert(target.clone(), content).is_some() {
                return Err(Error::Template(format!("two template files render to {target}")));
            }
        }
        Ok(out)
    }

    fn resolve_context(&self, context: &TemplateContext) -> Result<BTreeMap<String, String>> {
        let descriptor = &self.descriptor;
        let missing: Vec<String> = descriptor
            .required_keys
            .iter()
            .filter(|k| !context.contains_key(*k))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        let unknown: Vec<String> = context.keys().filter(|k| !descriptor.declares(k)).cloned().collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        let mut values = descriptor.optional_keys.clone();
        for (key, value) in context {
            if value.contains("{{") || value.contains("}}") {
                return Err(Error::Config(format!("value of {key} contains placeholder braces")));
            }
            values.insert(key.clone(), value.clone());
        }
        Ok(values)
    }
}

fn lookup<'a>(
    key: &str,
    values: &'a BTreeMap<String, String>,
    descriptor: &TemplateDescriptor,
    file: &str,
) -> Result<&'a str> {
    if !descriptor.declares(key) {
        return Err(Error::Template(format!("{file} uses undeclared key {key:?}")));
    }
    Ok(values.get(key).map(String::as_str).expect("declared keys resolved"))
}

fn valid_component(value: &str) -> bool {
    !value.is_empty() && value != "." && value != ".." && !value.contains(['/', '\\', '\0'])
}

fn render_path(path: &str, values: &BTreeMap<String, String>, descriptor: &TemplateDescriptor) -> Result<String> {
    let mut parts = Vec::new();
    for part in path.split('/') {
        let rendered = substitute(part, &|key| lookup(key, values, descriptor, path).map(str::to_string))?;
        if !valid_component(&rendered) {
            return Err(Error::Config(format!("{path} renders to invalid name {rendered:?}")));
        }
        parts.push(rendered);
    }
    Ok(parts.join("/"))
}

fn is_key(key: &str) -> bool {
    !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Replace each `{{ key }}` using `value`. Logic-free: anything other than a
/// bare key between the braces is an authoring error.
fn substitute(text: &str, value: &dyn Fn(&str) -> Result<String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| Error::Template("unclosed {{ placeholder".to_string()))?;
        let key = after[..end].trim();
        if !is_key(key) {
            return Err(Error::Template(format!("malformed placeholder {{{{{}}}}}", &after[..end])));
        }
        out.push_str(&value(key)?);
        rest = &after[end + 2..];
    }
    if rest.contains("}}") {
        return Err(Error::Template("unmatched }} in template".to_string()));
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Clone, Copy)]
enum Escape {
    None,
    Json,
    Html,
}

impl Escape {
    fn for_path(path: &str) -> Escape {
        if path.ends_with(".json") {
            Escape::Json
        } else if path.ends_with(".html") || path.ends_with(".htm") {
            Escape::Html
        } else {
            Escape::None
        }
    }

    fn apply(self, value: &str) -> String {
        match self {
            Escape::None => value.to_string(),
            Escape::Json => {
                let quoted = serde_json::to_string(value).expect("strings serialize");
                quoted[1..quoted.len() - 1].to_string()
            }
            Escape::Html => {
                let mut out = String::with_capacity(value.len());
                for c in value.chars() {
                    match c {
                        '&' => out.push_str("&amp;"),
                        '<' => out.push_str("&lt;"),
                        '>' => out.push_str("&gt;"),
                        '"' => out.push_str("&quot;"),
                        '\'' => out.push_str("&#39;"),
                        c => out.push(c),
                    }
                }
                out
            }
        }
    }
}

/// Template directories named by `PLUGSEARCH_TEMPLATES`.
pub fn default_search_paths() -> Vec<PathBuf> {
    std::env::var_os(TEMPLATE_PATH_ENV)
        .map(|v| std::env::split_paths(&v).filter(|p| !p.as_os_str().is_empty()).collect())
        .unwrap_or_default()
}

fn user_templates(search_paths: &[PathBuf]) -> Vec<TemplateInfo> {
    let mut found = Vec::new();
    for root in search_paths {
        let Ok(entries) = fs::read_dir(root) else {
            continue;
        };
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.join(DESCRIPTOR_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            match fs::read(dir.join(DESCRIPTOR_FILE))
                .map_err(Error::from)
                .and_then(|b| parse_descriptor(&b, &dir.display().to_string()))
            {
                Ok(descriptor) => found.push(TemplateInfo {
                    descriptor,
                    origin: TemplateOrigin::Directory(dir),
                }),
                Err(e) => tracing::warn!(error = %e, "skipping template"),
            }
        }
    }
    found
}

/// Built-in templates plus those found on `search_paths`, sorted by name.
/// A user template shadows a built-in or later one with the same name.
pub fn list_templates(search_paths: &[PathBuf]) -> Vec<TemplateInfo> {
    let mut by_name: BTreeMap<String, TemplateInfo> = BTreeMap::new();
    for info in user_templates(search_paths) {
        by_name.entry(info.descriptor.name.clone()).or_insert(info);
    }
    let vanilla = Template::builtin("vanilla").expect("vanilla is built in");
    by_name.entry(vanilla.descriptor.name.clone()).or_insert(TemplateInfo {
        descriptor: vanilla.descriptor,
        origin: TemplateOrigin::Builtin,
    });
    by_name.into_values().collect()
}

/// Render `template` into `output_dir/{local_app}` and return that path.
pub fn create_app(template: &str, context: &TemplateContext, output_dir: &Path) -> Result<PathBuf> {
    create_app_with(template, context, output_dir, &default_search_paths())
}

pub fn create_app_with(
    template: &str,
    context: &TemplateContext,
    output_dir: &Path,
    search_paths: &[PathBuf],
) -> Result<PathBuf> {
    let template = Template::find(template, search_paths)?;
    let files = template.render(context)?;
    let app_name = &context[APP_DIR_KEY];
    if !valid_component(app_name) {
        return Err(Error::Config(format!("{APP_DIR_KEY} {app_name:?} is not a directory name")));
    }
    let app_dir = output_dir.join(app_name);
    if app_dir.exists() && fs::read_dir(&app_dir).map_err(|e| Error::io_at(&app_dir, e))?.next().is_some() {
        return Err(Error::Config(format!("{} already exists and is not empty", app_dir.display())));
    }
    fs::create_dir_all(&app_dir).map_err(|e| Error::io_at(&app_dir, e))?;
    archive::write_tree(&app_dir, &files)?;
    tracing::info!(path = %app_dir.display(), template = %template.descriptor.name, "app created");
    Ok(app_dir)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    pub slug: String,
    pub organization: String,
    pub sdk: String,
    pub url: String,
    pub sha256: String,
    pub pushed_at: DateTime<Utc>,
}

/// Archive `local_dir` and upload it as `{org}/{slug}`. The directory is
/// removed only when asked and only after the registry acknowledged the
/// exact digest that was sent.
pub fn create_space_from_local(
    space_slug: &str,
    organization: &str,
    sdk: &str,
    local_dir: &Path,
    registry: &RegistryLocation,
    delete_after_push: bool,
) -> Result<SpaceDescriptor> {
    validate_name(space_slug)?;
    validate_name(organization)?;
    if !local_dir.join(APP_CONFIG_FILE).is_file() {
        return Err(Error::Config(format!(
            "{} is not a rendered app (no {APP_CONFIG_FILE})",
            local_dir.display()
        )));
    }
    let files = archive::collect_tree(local_dir)?;
    let bytes = archive::write_archive(&files)?;
    let location = RegistryLocation {
        org: organization.to_string(),
        ..registry.clone()
    };
    let client = RegistryClient::new(location)?;
    let published = client.put_space(space_slug, sdk, &bytes)?;
    if published.sha256 != archive::sha256_hex(&bytes) {
        return Err(Error::PublishRejected("acknowledged digest differs".to_string()));
    }
    if delete_after_push {
        fs::remove_dir_all(local_dir).map_err(|e| Error::io_at(local_dir, e))?;
    }
    Ok(SpaceDescriptor {
        slug: space_slug.to_string(),
        organization: organization.to_string(),
        sdk: sdk.to_string(),
        url: published.url,
        sha256: published.sha256,
        pushed_at: Utc::now().trunc_subsecs(0),
    })
}

/// Download a published space and return its files.
pub fn fetch_space(
    space_slug: &str,
    organization: &str,
    registry: &RegistryLocation,
) -> Result<BTreeMap<String, Vec<u8>>> {
    validate_name(organization)?;
    let location = RegistryLocation {
        org: organization.to_string(),
        ..registry.clone()
    };
    let bytes = RegistryClient::new(location)?.fetch_space(space_slug)?;
    archive::read_archive(&bytes)
}
