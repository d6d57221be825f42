//! Discussion threads: parsing, validation and flattening.
//!
//! Two input formats are supported. The tree format is a JSON document
//!
//! ```json
//! {"root": "A", "posts": [{"id": "A", "author": "u1", "text": "...", "reply_to": null, "quotes": []}]}
//! ```
//!
//! and the flat format is plain text with posts separated by a delimiter
//! token (`</s>` by default). Both end up as a [`DocumentSet`], the ordered
//! list of text blocks every pipeline stage consumes.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default separator between posts in the flat format.
pub const FLAT_DELIMITER: &str = "</s>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThreadError {
    #[error("malformed thread document at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("post id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("post {post:?} references unknown post id {missing:?}")]
    DanglingReference { post: String, missing: String },
    #[error("root post {0:?} is not present in the thread")]
    MissingRoot(String),
    #[error("thread structure error: {0}")]
    Structure(String),
    #[error("post {0:?} has empty text")]
    EmptyPost(String),
    #[error("input is empty")]
    EmptyInput,
}

/// A single post with its reply and quote edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Post {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quotes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDocument {
    root: String,
    posts: Vec<Post>,
}

/// A validated thread. Construct through [`Thread::new`] or
/// [`parse_thread_tree`]; both enforce the tree invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thread {
    root_id: String,
    posts: Vec<Post>,
    source_name: Option<String>,
}

impl Thread {
    pub fn new(root_id: impl Into<String>, posts: Vec<Post>) -> Result<Self, ThreadError> {
        let thread = Thread {
            root_id: root_id.into(),
            posts,
            source_name: None,
        };
        thread.validate()?;
        Ok(thread)
    }

    pub fn with_source_name(mut self, name: impl Into<String>) -> Self {
        self.source_name = Some(name.into());
        self
    }

    pub fn root_id(&self) -> &str {
        &self.root_id
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn source_name(&self) -> Option<&str> {
        self.source_name.as_deref()
    }

    pub fn reply_edge_count(&self) -> usize {
        self.posts.iter().filter(|p| p.reply_to.is_some()).count()
    }

    pub fn quote_edge_count(&self) -> usize {
        self.posts.iter().map(|p| p.quotes.len()).sum()
    }

    /// Serialize back into the tree format.
    pub fn to_json(&self) -> String {
        let doc = TreeDocument {
            root: self.root_id.clone(),
            posts: self.posts.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("thread serialization is infallible")
    }

    fn validate(&self) -> Result<(), ThreadError> {
        let mut ids = HashSet::with_capacity(self.posts.len());
        for post in &self.posts {
            if !ids.insert(post.id.as_str()) {
                return Err(ThreadError::DuplicateId(post.id.clone()));
            }
        }
        if !ids.contains(self.root_id.as_str()) {
            return Err(ThreadError::MissingRoot(self.root_id.clone()));
        }
        for post in &self.posts {
            if post.text.trim().is_empty() {
                return Err(ThreadError::EmptyPost(post.id.clone()));
            }
            let refs = post.reply_to.iter().chain(post.quotes.iter());
            for target in refs {
                if !ids.contains(target.as_str()) {
                    return Err(ThreadError::DanglingReference {
                        post: post.id.clone(),
                        missing: target.clone(),
                    });
                }
            }
        }

        let parentless: Vec<&str> = self
            .posts
            .iter()
            .filter(|p| p.reply_to.is_none())
            .map(|p| p.id.as_str())
            .collect();
        match parentless.as_slice() {
            [only] if *only == self.root_id => {}
            [] => {
                return Err(ThreadError::Structure(
                    "every post has a reply_to, so the reply edges contain a cycle".into(),
                ))
            }
            [other] => {
                return Err(ThreadError::Structure(format!(
                    "post {other:?} has no reply_to but the root is {:?}",
                    self.root_id
                )))
            }
            many => {
                return Err(ThreadError::Structure(format!(
                    "{} posts have no reply_to: {:?}",
                    many.len(),
                    many
                )))
            }
        }

        // With one parentless post and one parent per post, the edges form a
        // tree iff every post is reachable from the root.
        let reached = self.preorder().len();
        if reached != self.posts.len() {
            let seen: HashSet<&str> = self.preorder().into_iter().map(|p| p.id.as_str()).collect();
            let stranded: Vec<&str> = self
                .posts
                .iter()
                .map(|p| p.id.as_str())
                .filter(|id| !seen.contains(id))
                .collect();
            return Err(ThreadError::Structure(format!(
                "reply edges contain a cycle through {stranded:?}"
            )));
        }
        Ok(())
    }

    /// Depth-first preorder from the root, children in listed order.
    fn preorder(&self) -> Vec<&Post> {
        let mut children: HashMap<&str, Vec<&Post>> = HashMap::new();
        let mut by_id: HashMap<&str, &Post> = HashMap::new();
        for post in &self.posts {
            by_id.insert(post.id.as_str(), post);
            if let Some(parent) = &post.reply_to {
                children.entry(parent.as_str()).or_default().push(post);
            }
        }
        let mut out = Vec::with_capacity(self.posts.len());
        let Some(root) = by_id.get(self.root_id.as_str()) else {
            return out;
        };
        let mut stack = vec![*root];
        let mut visited = HashSet::new();
        while let Some(post) = stack.pop() {
            if !visited.insert(post.id.as_str()) {
                continue;
            }
            out.push(post);
            if let Some(kids) = children.get(post.id.as_str()) {
                for kid in kids.iter().rev() {
                    stack.push(kid);
                }
            }
        }
        out
    }
}

/// Where a document set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Tree,
    Flat,
}

/// Ordered, non-empty list of non-blank text blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSet {
    documents: Vec<String>,
    origin: Origin,
}

impl DocumentSet {
    pub fn new(documents: Vec<String>, origin: Origin) -> Result<Self, ThreadError> {
        if documents.is_empty() {
            return Err(ThreadError::EmptyInput);
        }
        if let Some(i) = documents.iter().position(|d| d.trim().is_empty()) {
            return Err(ThreadError::EmptyPost(format!("document #{i}")));
        }
        Ok(DocumentSet { documents, origin })
    }

    pub fn documents(&self) -> &[String] {
        &self.documents
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// All documents joined with blank lines, the form sent in prompts.
    pub fn joined(&self) -> String {
        self.documents.join("\n\n")
    }
}

fn byte_offset(input: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in input.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(input.len());
        }
        offset += l.len();
    }
    input.len()
}

/// Parse and validate a thread in the JSON tree format.
pub fn parse_thread_tree(input: &str) -> Result<Thread, ThreadError> {
    let doc: TreeDocument = serde_json::from_str(input).map_err(|e| ThreadError::Parse {
        offset: byte_offset(input, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Thread::new(doc.root, doc.posts)
}

/// Split flat text on `delimiter`, trimming segments and dropping blank ones.
pub fn parse_flat(input: &str, delimiter: &str) -> Result<DocumentSet, ThreadError> {
    if input.trim().is_empty() {
        return Err(ThreadError::EmptyInput);
    }
    let documents: Vec<String> = if delimiter.is_empty() {
        vec![input.trim().to_string()]
    } else {
        input
            .split(delimiter)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    };
    DocumentSet::new(documents, Origin::Flat)
}

/// Linearize a thread by depth-first preorder traversal.
pub fn flatten(thread: &Thread) -> DocumentSet {
    let documents = thread
        .preorder()
        .into_iter()
        .map(|p| p.text.trim().to_string())
        .collect();
    DocumentSet::new(documents, Origin::Tree).expect("validated thread has non-empty posts")
}
