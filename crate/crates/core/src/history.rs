//! Histories of invoke/respond events, their skeletons, and a line-oriented
//! text format for moving them between the recorder, the checker, and the CLI.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Identifier of a logical process, 1-based so it reads like `p1`, `p2`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessId(pub u32);

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Argument passed to an update operation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Arg {
    Int(i64),
    Real(f64),
}

/// A value returned by a query-style operation.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    /// Bit vector returned by a snapshot scan, index = component.
    Bits(Vec<bool>),
}

/// The operation being performed, independent of which object implements it.
#[derive(Clone, Debug, PartialEq)]
pub enum OpDesc {
    Update(Arg),
    Read,
    /// Point query for an item, e.g. a frequency estimate.
    Query(u64),
    Scan,
}

impl OpDesc {
    /// Does this operation return a value (as opposed to just acknowledging)?
    pub fn returns_value(&self) -> bool {
        !matches!(self, OpDesc::Update(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpDesc::Update(_) => "update",
            OpDesc::Read => "read",
            OpDesc::Query(_) => "query",
            OpDesc::Scan => "scan",
        }
    }
}

/// Return part of a respond event.
#[derive(Clone, Debug, PartialEq)]
pub enum Ret {
    /// Acknowledgement of an operation with no result (updates).
    Unit,
    Value(Value),
    /// The distinguished "?" of a skeleton history.
    Erased,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    Invoke,
    Respond(Ret),
}

/// One invoke or respond, stamped with a globally unique, increasing sequence
/// number. Respond events repeat the operation of their matching invoke.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub seq: u64,
    pub process: ProcessId,
    pub object: String,
    pub op: OpDesc,
    pub kind: EventKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum HistoryError {
    #[error("event {seq}: sequence numbers must strictly increase (previous was {prev})")]
    SeqOrder { seq: u64, prev: u64 },
    #[error("event {seq}: {process} invoked while its previous operation is still in flight")]
    InvokeWhileBusy { seq: u64, process: ProcessId },
    #[error("event {seq}: {process} responded with no operation in flight")]
    RespondWhileIdle { seq: u64, process: ProcessId },
    #[error("event {seq}: respond does not match the in-flight operation of {process}")]
    RespondMismatch { seq: u64, process: ProcessId },
    #[error("event {seq}: update operations acknowledge with unit, not a value")]
    UpdateReturnsValue { seq: u64 },
    #[error("event {seq}: {op} must return a value or '?'")]
    MissingValue { seq: u64, op: &'static str },
    #[error("event {seq}: non-finite real values are not allowed")]
    NonFinite { seq: u64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn finite(a: f64) -> bool {
    a.is_finite()
}

fn arg_finite(arg: &Arg) -> bool {
    match arg {
        Arg::Int(_) => true,
        Arg::Real(r) => finite(*r),
    }
}

fn ret_finite(ret: &Ret) -> bool {
    match ret {
        Ret::Value(Value::Real(r)) => finite(*r),
        _ => true,
    }
}

/// A record of one operation extracted from a history: its invoke, and its
/// respond if one has arrived.
#[derive(Clone, Debug, PartialEq)]
pub struct OpRec {
    /// Position in invocation order, unique within one history.
    pub index: usize,
    pub process: ProcessId,
    pub object: String,
    pub op: OpDesc,
    pub invoked: u64,
    pub response: Option<(u64, Ret)>,
}

impl OpRec {
    pub fn is_pending(&self) -> bool {
        self.response.is_none()
    }

    /// Real-time precedence: this operation responded before `other` was invoked.
    pub fn precedes(&self, other: &OpRec) -> bool {
        match self.response {
            Some((resp, _)) => resp < other.invoked,
            None => false,
        }
    }

    pub fn ret(&self) -> Option<&Ret> {
        self.response.as_ref().map(|(_, r)| r)
    }
}

/// A well-formed history: per process, invokes and responds alternate, and
/// sequence numbers strictly increase.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    events: Vec<Event>,
}

impl History {
    pub fn new(events: Vec<Event>) -> Result<Self, HistoryError> {
        let mut prev_seq: Option<u64> = None;
        let mut inflight: HashMap<ProcessId, (String, OpDesc)> = HashMap::new();
        for ev in &events {
            if let Some(prev) = prev_seq {
                if ev.seq <= prev {
                    return Err(HistoryError::SeqOrder { seq: ev.seq, prev });
                }
            }
            prev_seq = Some(ev.seq);
            match &ev.kind {
                EventKind::Invoke => {
                    if inflight.contains_key(&ev.process) {
                        return Err(HistoryError::InvokeWhileBusy {
                            seq: ev.seq,
                            process: ev.process,
                        });
                    }
                    if let OpDesc::Update(arg) = &ev.op {
                        if !arg_finite(arg) {
                            return Err(HistoryError::NonFinite { seq: ev.seq });
                        }
                    }
                    inflight.insert(ev.process, (ev.object.clone(), ev.op.clone()));
                }
                EventKind::Respond(ret) => {
                    match inflight.remove(&ev.process) {
                        None => {
                            return Err(HistoryError::RespondWhileIdle {
                                seq: ev.seq,
                                process: ev.process,
                            })
                        }
                        Some((obj, op)) => {
                            if obj != ev.object || op != ev.op {
                                return Err(HistoryError::RespondMismatch {
                                    seq: ev.seq,
                                    process: ev.process,
                                });
                            }
                        }
                    }
                    match (&ev.op, ret) {
                        (OpDesc::Update(_), Ret::Unit) => {}
                        (OpDesc::Update(_), Ret::Erased) => {}
                        (OpDesc::Update(_), Ret::Value(_)) => {
                            return Err(HistoryError::UpdateReturnsValue { seq: ev.seq })
                        }
                        (op, Ret::Unit) => {
                            return Err(HistoryError::MissingValue {
                                seq: ev.seq,
                                op: op.name(),
                            })
                        }
                        (_, Ret::Value(_)) | (_, Ret::Erased) => {}
                    }
                    if !ret_finite(ret) {
                        return Err(HistoryError::NonFinite { seq: ev.seq });
                    }
                }
            }
        }
        Ok(History { events })
    }

    pub fn empty() -> Self {
        History { events: Vec::new() }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Extract operations in invocation order, pairing invokes with responds.
    pub fn operations(&self) -> Vec<OpRec> {
        let mut ops: Vec<OpRec> = Vec::new();
        let mut open: HashMap<ProcessId, usize> = HashMap::new();
        for ev in &self.events {
            match &ev.kind {
                EventKind::Invoke => {
                    let index = ops.len();
                    open.insert(ev.process, index);
                    ops.push(OpRec {
                        index,
                        process: ev.process,
                        object: ev.object.clone(),
                        op: ev.op.clone(),
                        invoked: ev.seq,
                        response: None,
                    });
                }
                EventKind::Respond(ret) => {
                    let idx = open.remove(&ev.process).expect("validated history");
                    ops[idx].response = Some((ev.seq, ret.clone()));
                }
            }
        }
        ops
    }

    /// True when every invoke has a matching respond.
    pub fn is_complete(&self) -> bool {
        self.operations().iter().all(|op| !op.is_pending())
    }

    /// True when operations do not overlap: every invoke is immediately
    /// followed by its own respond.
    pub fn is_sequential(&self) -> bool {
        let mut pending: Option<ProcessId> = None;
        for ev in &self.events {
            match &ev.kind {
                EventKind::Invoke => {
                    if pending.is_some() {
                        return false;
                    }
                    pending = Some(ev.process);
                }
                EventKind::Respond(_) => {
                    if pending != Some(ev.process) {
                        return false;
                    }
                    pending = None;
                }
            }
        }
        pending.is_none()
    }

    /// Names of the objects touched by this history, in first-appearance order.
    pub fn objects(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for ev in &self.events {
            if !names.contains(&ev.object) {
                names.push(ev.object.clone());
            }
        }
        names
    }

    /// The subhistory of events on one object, sequence numbers untouched.
    pub fn project(&self, object: &str) -> History {
        History {
            events: self
                .events
                .iter()
                .filter(|ev| ev.object == object)
                .cloned()
                .collect(),
        }
    }

    /// Erase every response value, keeping event order.
    pub fn skeletonize(&self) -> SkeletonHistory {
        let events = self
            .events
            .iter()
            .map(|ev| {
                let kind = match &ev.kind {
                    EventKind::Invoke => EventKind::Invoke,
                    EventKind::Respond(_) => EventKind::Respond(Ret::Erased),
                };
                Event { kind, ..ev.clone() }
            })
            .collect();
        SkeletonHistory(History { events })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            let (kind, ret) = match &ev.kind {
                EventKind::Invoke => ("invoke", "-".to_string()),
                EventKind::Respond(ret) => ("respond", format_ret(ret)),
            };
            let arg = match &ev.op {
                OpDesc::Update(Arg::Int(v)) => v.to_string(),
                OpDesc::Update(Arg::Real(v)) => format_real(*v),
                OpDesc::Query(item) => item.to_string(),
                OpDesc::Read | OpDesc::Scan => "-".to_string(),
            };
            out.push_str(&format!(
                "{} {} {} {} {} {} {}\n",
                ev.seq,
                ev.process.0,
                ev.object,
                kind,
                ev.op.name(),
                arg,
                ret
            ));
        }
        out
    }

    /// Parse the text produced by [`History::to_text`]. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, HistoryError> {
        let mut events = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(HistoryError::Parse {
                    line,
                    msg: format!("expected 7 fields, got {}", fields.len()),
                });
            }
            let seq: u64 = fields[0]
                .parse()
                .map_err(|_| parse_err(line, "bad sequence number"))?;
            let pid: u32 = fields[1]
                .parse()
                .map_err(|_| parse_err(line, "bad process id"))?;
            let object = fields[2].to_string();
            let op = parse_op(line, fields[4], fields[5])?;
            let kind = match fields[3] {
                "invoke" => {
                    if fields[6] != "-" {
                        return Err(parse_err(line, "invoke lines take '-' for ret"));
                    }
                    EventKind::Invoke
                }
                "respond" => EventKind::Respond(parse_ret(line, fields[6])?),
                other => return Err(parse_err(line, &format!("unknown kind '{other}'"))),
            };
            events.push(Event {
                seq,
                process: ProcessId(pid),
                object,
                op,
                kind,
            });
        }
        History::new(events)
    }
}

fn parse_err(line: usize, msg: &str) -> HistoryError {
    HistoryError::Parse {
        line,
        msg: msg.to_string(),
    }
}

pub(crate) fn parse_op(line: usize, op: &str, arg: &str) -> Result<OpDesc, HistoryError> {
    match op {
        "update" => {
            let arg = if arg.contains('.') {
                Arg::Real(
                    arg.parse()
                        .map_err(|_| parse_err(line, "bad real argument"))?,
                )
            } else {
                Arg::Int(
                    arg.parse()
                        .map_err(|_| parse_err(line, "bad integer argument"))?,
                )
            };
            Ok(OpDesc::Update(arg))
        }
        "read" => {
            if arg != "-" {
                return Err(parse_err(line, "read takes no argument"));
            }
            Ok(OpDesc::Read)
        }
        "query" => Ok(OpDesc::Query(
            arg.parse().map_err(|_| parse_err(line, "bad query item"))?,
        )),
        "scan" => {
            if arg != "-" {
                return Err(parse_err(line, "scan takes no argument"));
            }
            Ok(OpDesc::Scan)
        }
        other => Err(parse_err(line, &format!("unknown op '{other}'"))),
    }
}

fn parse_ret(line: usize, text: &str) -> Result<Ret, HistoryError> {
    match text {
        "?" => Ok(Ret::Erased),
        "ok" => Ok(Ret::Unit),
        _ => {
            if let Some(bits) = text.strip_prefix("bits:") {
                let mut v = Vec::with_capacity(bits.len());
                for ch in bits.chars() {
                    match ch {
                        '0' => v.push(false),
                        '1' => v.push(true),
                        _ => return Err(parse_err(line, "bits return must be 0s and 1s")),
                    }
                }
                Ok(Ret::Value(Value::Bits(v)))
            } else if text.contains('.') {
                Ok(Ret::Value(Value::Real(
                    text.parse()
                        .map_err(|_| parse_err(line, "bad real return"))?,
                )))
            } else {
                Ok(Ret::Value(Value::Int(
                    text.parse()
                        .map_err(|_| parse_err(line, "bad integer return"))?,
                )))
            }
        }
    }
}

fn format_ret(ret: &Ret) -> String {
    match ret {
        Ret::Unit => "ok".to_string(),
        Ret::Erased => "?".to_string(),
        Ret::Value(v) => v.to_string(),
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{}", format_real(*v)),
            Value::Bits(bits) => {
                write!(f, "bits:")?;
                for b in bits {
                    write!(f, "{}", if *b { '1' } else { '0' })?;
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn format_real(v: f64) -> String {
    // Keep a '.' so the parser can tell reals from integers.
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

/// A history whose response values have all been erased to "?".
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonHistory(History);

impl SkeletonHistory {
    pub fn history(&self) -> &History {
        &self.0
    }

    pub fn into_history(self) -> History {
        self.0
    }

    pub fn operations(&self) -> Vec<OpRec> {
        self.0.operations()
    }

    pub fn events(&self) -> &[Event] {
        self.0.events()
    }

    pub fn is_sequential(&self) -> bool {
        self.0.is_sequential()
    }
}

/// Incrementally builds a well-formed history, assigning sequence numbers in
/// call order. Misuse (e.g. responding for an idle process) is an error so
/// drivers can surface ill-formed schedules.
#[derive(Debug, Default)]
pub struct Recorder {
    next_seq: u64,
    events: Vec<Event>,
    inflight: HashMap<ProcessId, (String, OpDesc)>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn invoke(
        &mut self,
        process: ProcessId,
        object: &str,
        op: OpDesc,
    ) -> Result<(), HistoryError> {
        if self.inflight.contains_key(&process) {
            return Err(HistoryError::InvokeWhileBusy {
                seq: self.next_seq,
                process,
            });
        }
        self.inflight
            .insert(process, (object.to_string(), op.clone()));
        self.push(process, object.to_string(), op, EventKind::Invoke);
        Ok(())
    }

    pub fn respond(&mut self, process: ProcessId, ret: Ret) -> Result<(), HistoryError> {
        let (object, op) = self
            .inflight
            .remove(&process)
            .ok_or(HistoryError::RespondWhileIdle {
                seq: self.next_seq,
                process,
            })?;
        self.push(process, object, op, EventKind::Respond(ret));
        Ok(())
    }

    pub fn in_flight(&self, process: ProcessId) -> Option<&OpDesc> {
        self.inflight.get(&process).map(|(_, op)| op)
    }

    fn push(&mut self, process: ProcessId, object: String, op: OpDesc, kind: EventKind) {
        self.events.push(Event {
            seq: self.next_seq,
            process,
            object,
            op,
            kind,
        });
        self.next_seq += 1;
    }

    /// Finish recording. The result is well-formed by construction; pending
    /// operations stay pending.
    pub fn finish(self) -> History {
        History::new(self.events).expect("recorder only emits well-formed histories")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(seq: u64, p: u32, object: &str, op: OpDesc, kind: EventKind) -> Event {
        Event {
            seq,
            process: ProcessId(p),
            object: object.into(),
            op,
            kind,
        }
    }

    /// An increment by p1 concurrent with a read by p2 that returns 0.
    fn inc_read_history() -> History {
        History::new(vec![
            ev(0, 1, "c", OpDesc::Update(Arg::Int(3)), EventKind::Invoke),
            ev(1, 2, "c", OpDesc::Read, EventKind::Invoke),
            ev(
                2,
                2,
                "c",
                OpDesc::Read,
                EventKind::Respond(Ret::Value(Value::Int(0))),
            ),
            ev(
                3,
                1,
                "c",
                OpDesc::Update(Arg::Int(3)),
                EventKind::Respond(Ret::Unit),
            ),
        ])
        .unwrap()
    }

    #[test]
    fn skeleton_erases_read_but_not_order() {
        let h = inc_read_history();
        let sk = h.skeletonize();
        let evs = sk.events();
        assert_eq!(evs.len(), 4);
        for (orig, erased) in h.events().iter().zip(evs) {
            assert_eq!(orig.seq, erased.seq);
            assert_eq!(orig.op, erased.op);
        }
        assert_eq!(evs[2].kind, EventKind::Respond(Ret::Erased));
        assert_eq!(evs[3].kind, EventKind::Respond(Ret::Erased));
    }

    #[test]
    fn skeleton_of_empty_history_is_empty() {
        assert!(History::empty().skeletonize().events().is_empty());
    }

    #[test]
    fn skeletonize_is_idempotent() {
        let sk = inc_read_history().skeletonize();
        assert_eq!(sk.history().skeletonize(), sk);
    }

    #[test]
    fn operations_pair_invokes_with_responds() {
        let ops = inc_read_history().operations();
        assert_eq!(ops.len(), 2);
        assert_eq!(ops[0].process, ProcessId(1));
        assert_eq!(ops[0].response.as_ref().unwrap().0, 3);
        assert_eq!(ops[1].ret(), Some(&Ret::Value(Value::Int(0))));
        assert!(!ops[0].precedes(&ops[1]));
        assert!(!ops[1].precedes(&ops[0]));
    }

    #[test]
    fn pending_operation_is_reported() {
        let h = History::new(vec![ev(
            0,
            1,
            "c",
            OpDesc::Update(Arg::Int(1)),
            EventKind::Invoke,
        )])
        .unwrap();
        assert!(!h.is_complete());
        assert!(h.operations()[0].is_pending());
    }

    #[test]
    fn sequential_detection() {
        assert!(!inc_read_history().is_sequential());
        let seq = History::new(vec![
            ev(0, 1, "c", OpDesc::Update(Arg::Int(3)), EventKind::Invoke),
            ev(
                1,
                1,
                "c",
                OpDesc::Update(Arg::Int(3)),
                EventKind::Respond(Ret::Unit),
            ),
            ev(2, 2, "c", OpDesc::Read, EventKind::Invoke),
            ev(
                3,
                2,
                "c",
                OpDesc::Read,
                EventKind::Respond(Ret::Value(Value::Int(3))),
            ),
        ])
        .unwrap();
        assert!(seq.is_sequential());
        assert!(History::empty().is_sequential());
    }

    #[test]
    fn rejects_double_invoke() {
        let err = History::new(vec![
            ev(0, 1, "c", OpDesc::Read, EventKind::Invoke),
            ev(1, 1, "c", OpDesc::Read, EventKind::Invoke),
        ])
        .unwrap_err();
        assert_eq!(
            err,
            HistoryError::InvokeWhileBusy {
                seq: 1,
                process: ProcessId(1)
            }
        );
    }

    #[test]
    fn rejects_respond_without_invoke() {
        let err = History::new(vec![ev(
            0,
            1,
            "c",
            OpDesc::Read,
            EventKind::Respond(Ret::Value(Value::Int(0))),
        )])
        .unwrap_err();
        assert_eq!(
            err,
            HistoryError::RespondWhileIdle {
                seq: 0,
                process: ProcessId(1)
            }
        );
    }

    #[test]
    fn rejects_stale_sequence_numbers() {
        let err = History::new(vec![
            ev(5, 1, "c", OpDesc::Read, EventKind::Invoke),
            ev(5, 2, "c", OpDesc::Read, EventKind::Invoke),
        ])
        .unwrap_err();
        assert_eq!(err, HistoryError::SeqOrder { seq: 5, prev: 5 });
    }

    #[test]
    fn rejects_mismatched_respond() {
        let err = History::new(vec![
            ev(0, 1, "c", OpDesc::Read, EventKind::Invoke),
            ev(1, 1, "c", OpDesc::Scan, EventKind::Respond(Ret::Erased)),
        ])
        .unwrap_err();
        assert_eq!(
            err,
            HistoryError::RespondMismatch {
                seq: 1,
                process: ProcessId(1)
            }
        );
    }

    #[test]
    fn rejects_update_returning_value() {
        let err = History::new(vec![
            ev(0, 1, "c", OpDesc::Update(Arg::Int(1)), EventKind::Invoke),
            ev(
                1,
                1,
                "c",
                OpDesc::Update(Arg::Int(1)),
                EventKind::Respond(Ret::Value(Value::Int(1))),
            ),
        ])
        .unwrap_err();
        assert_eq!(err, HistoryError::UpdateReturnsValue { seq: 1 });
    }

    #[test]
    fn rejects_nan_argument() {
        let err = History::new(vec![ev(
            0,
            1,
            "c",
            OpDesc::Update(Arg::Real(f64::NAN)),
            EventKind::Invoke,
        )])
        .unwrap_err();
        assert_eq!(err, HistoryError::NonFinite { seq: 0 });
    }

    #[test]
    fn projection_keeps_order_and_drops_other_objects() {
        let h = History::new(vec![
            ev(0, 1, "a", OpDesc::Update(Arg::Int(1)), EventKind::Invoke),
            ev(1, 2, "b", OpDesc::Read, EventKind::Invoke),
            ev(
                2,
                1,
                "a",
                OpDesc::Update(Arg::Int(1)),
                EventKind::Respond(Ret::Unit),
            ),
            ev(
                3,
                2,
                "b",
                OpDesc::Read,
                EventKind::Respond(Ret::Value(Value::Int(0))),
            ),
        ])
        .unwrap();
        assert_eq!(h.objects(), vec!["a".to_string(), "b".to_string()]);
        let a = h.project("a");
        assert_eq!(a.events().len(), 2);
        assert!(a.events().iter().all(|e| e.object == "a"));
        assert_eq!(a.events()[1].seq, 2);
    }

    #[test]
    fn text_round_trip() {
        let h = History::new(vec![
            ev(0, 1, "c", OpDesc::Update(Arg::Real(2.5)), EventKind::Invoke),
            ev(1, 2, "s", OpDesc::Scan, EventKind::Invoke),
            ev(
                2,
                2,
                "s",
                OpDesc::Scan,
                EventKind::Respond(Ret::Value(Value::Bits(vec![true, false, true]))),
            ),
            ev(
                3,
                1,
                "c",
                OpDesc::Update(Arg::Real(2.5)),
                EventKind::Respond(Ret::Unit),
            ),
            ev(4, 3, "m", OpDesc::Query(7), EventKind::Invoke),
            ev(5, 3, "m", OpDesc::Query(7), EventKind::Respond(Ret::Erased)),
        ])
        .unwrap();
        let text = h.to_text();
        assert_eq!(History::parse(&text).unwrap(), h);
    }

    #[test]
    fn parse_skips_comments_and_blank_lines() {
        let text = "# a counter read\n\n0 1 c invoke read - -\n1 1 c respond read - 0\n";
        let h = History::parse(text).unwrap();
        assert_eq!(h.events().len(), 2);
        assert_eq!(
            h.events()[1].kind,
            EventKind::Respond(Ret::Value(Value::Int(0)))
        );
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            History::parse("0 1 c invoke read -").unwrap_err(),
            HistoryError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            History::parse("0 1 c poke read - -").unwrap_err(),
            HistoryError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            History::parse("0 1 c invoke read - 3").unwrap_err(),
            HistoryError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn recorder_builds_well_formed_histories() {
        let mut rec = Recorder::new();
        rec.invoke(ProcessId(1), "c", OpDesc::Update(Arg::Int(4))).unwrap();
        rec.invoke(ProcessId(2), "c", OpDesc::Read).unwrap();
        assert!(rec.invoke(ProcessId(2), "c", OpDesc::Read).is_err());
        rec.respond(ProcessId(2), Ret::Value(Value::Int(0))).unwrap();
        rec.respond(ProcessId(1), Ret::Unit).unwrap();
        assert!(rec.respond(ProcessId(1), Ret::Unit).is_err());
        let h = rec.finish();
        assert_eq!(h.events().len(), 4);
        assert!(h.is_complete());
    }
}
