//! Witness-script templates for the offered GP contracts.
//!
//! Scripts are built as a small tree of opcode lines and conditional blocks
//! and rendered with four spaces per nesting level. Placeholder pushes keep
//! their published spacing inside the angle brackets.

use std::fmt::{self, Write as _};

use super::{ContractError, ContractKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    Op(&'static str),
    Num(u8),
    /// Placeholder push; the text is rendered verbatim between `⟨` and `⟩`.
    Push(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Line(Vec<Token>),
    Branch {
        opener: &'static str,
        then: Vec<Item>,
        otherwise: Vec<Item>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Script(pub Vec<Item>);

const INDENT: &str = "    ";

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Op(op) => f.write_str(op),
            Token::Num(n) => write!(f, "{n}"),
            Token::Push(text) => write!(f, "\u{27e8}{text}\u{27e9}"),
        }
    }
}

fn render_items(items: &[Item], depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    for item in items {
        match item {
            Item::Line(tokens) => {
                out.push_str(&pad);
                for (i, t) in tokens.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    let _ = write!(out, "{t}");
                }
                out.push('\n');
            }
            Item::Branch { opener, then, otherwise } => {
                let _ = writeln!(out, "{pad}{opener}");
                render_items(then, depth + 1, out);
                if !otherwise.is_empty() {
                    let _ = writeln!(out, "{pad}OP_ELSE");
                    render_items(otherwise, depth + 1, out);
                }
                let _ = writeln!(out, "{pad}OP_ENDIF");
            }
        }
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        render_items(&self.0, 0, &mut out);
        f.write_str(&out)
    }
}

fn line(tokens: Vec<Token>) -> Item {
    Item::Line(tokens)
}

fn branch(opener: &'static str, then: Vec<Item>, otherwise: Vec<Item>) -> Item {
    Item::Branch { opener, then, otherwise }
}

use Token::{Num, Op, Push};

const REVOCATION: &str = " RIPEMD160 ( SHA256 ( revocationpubkey ))";
const REMOTE_KEY: &str = " remote_htlcgppubkey";
const LOCAL_KEY: &str = " local_htlcgppubkey ";
const PAYMENT_HASH: &str = " RIPEMD160 ( payment_hash )";
const CANCELLATION_HASH: &str = " RIPEMD160 ( cancellation_hash) ";

/// Revocation check, then the remote-key size test selecting between the two
/// kind-specific branches.
fn offered(notif: Vec<Item>, otherwise: Vec<Item>) -> Script {
    Script(vec![
        line(vec![Op("OP_DUP"), Op("OP_HASH160"), Push(REVOCATION), Op("OP_EQUAL")]),
        branch(
            "OP_IF",
            vec![line(vec![Op("OP_CHECKSIG")])],
            vec![
                line(vec![Push(REMOTE_KEY), Op("OP_SWAP"), Op("OP_SIZE"), Num(32), Op("OP_EQUAL")]),
                branch("OP_NOTIF", notif, otherwise),
            ],
        ),
    ])
}

fn hash_check(hash: &'static str) -> Item {
    line(vec![Op("OP_HASH160"), Push(hash), Op("OP_EQUALVERIFY")])
}

fn multisig(drop_first: bool) -> Item {
    let mut tokens = Vec::new();
    if drop_first {
        tokens.push(Op("OP_DROP"));
    }
    tokens.extend([Num(2), Op("OP_SWAP"), Push(LOCAL_KEY), Num(2), Op("OP_CHECKMULTISIG")]);
    line(tokens)
}

/// Cancellation contract offered by the payee: either preimage plus both
/// signatures returns the deposit, otherwise the counterparty claims it after
/// `cltv_expiry`.
pub fn offered_cancellation() -> Script {
    offered(
        vec![branch(
            "OP_IF",
            vec![hash_check(PAYMENT_HASH), multisig(false)],
            vec![hash_check(CANCELLATION_HASH), multisig(false)],
        )],
        vec![
            line(vec![Op("OP_DROP"), Push(" cltv_expiry "), Op("OP_CHECKLOCKTIMEVERIFY"), Op("OP_DROP")]),
            line(vec![Op("OP_CHECKSIG")]),
        ],
    )
}

/// Payment contract offered by the payer: timeout through the multisig
/// branch, or the payee spends with either preimage.
pub fn offered_payment() -> Script {
    offered(
        vec![multisig(true)],
        vec![branch(
            "OP_IF",
            vec![hash_check(CANCELLATION_HASH), line(vec![Op("OP_CHECKSIG")])],
            vec![hash_check(PAYMENT_HASH), line(vec![Op("OP_CHECKSIG")])],
        )],
    )
}

pub fn render_script_template(kind: ContractKind) -> Result<String, ContractError> {
    match kind {
        ContractKind::GpCancellation => Ok(offered_cancellation().to_string()),
        ContractKind::GpPayment => Ok(offered_payment().to_string()),
        other => Err(ContractError::UnsupportedKind(other)),
    }
}
