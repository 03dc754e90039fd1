//! Concrete machine state and the single-step interpreter.

use std::collections::HashMap;

use crate::ir::eval::from_le;
use crate::ir::{eval_concrete, is_internal_pcode_target, AddressSpace, EvalError, Location, Opcode, PcodeOp, Program, Varnode};
use crate::loader::internal_target_index;

pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FaultKind {
    DivideByZero,
    UnmappedTarget,
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue(Location),
    PanicReached(u64),
    Fault(FaultKind),
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("write to constant varnode {0}")]
    WriteToConst(Varnode),
    #[error("write of {got} bytes to {vn}")]
    WidthMismatch { vn: Varnode, got: usize },
    #[error("no micro-op at the program counter")]
    NoPc,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Default)]
pub struct MachineState {
    registers: HashMap<u64, u8>,
    ram: HashMap<u64, u8>,
    uniques: HashMap<u64, u8>,
    /// `None` is the terminal sentinel.
    pub pc: Option<Location>,
    /// Return locations pushed by CALL; `None` marks a call with no continuation.
    pub call_stack: Vec<Option<Location>>,
    pub step_count: u64,
    pub step_budget: u64,
}

impl MachineState {
    /// Fresh state with RAM initialized from the program's `.ram` section.
    pub fn new(program: &Program) -> Self {
        MachineState {
            ram: program.initial_ram.iter().map(|(a, b)| (*a, *b)).collect(),
            step_budget: DEFAULT_STEP_BUDGET,
            ..Default::default()
        }
    }

    fn space(&self, space: AddressSpace) -> &HashMap<u64, u8> {
        match space {
            AddressSpace::Register => &self.registers,
            AddressSpace::Ram => &self.ram,
            AddressSpace::Unique | AddressSpace::Const => &self.uniques,
        }
    }

    fn space_mut(&mut self, space: AddressSpace) -> &mut HashMap<u64, u8> {
        match space {
            AddressSpace::Register => &mut self.registers,
            AddressSpace::Ram => &mut self.ram,
            AddressSpace::Unique | AddressSpace::Const => &mut self.uniques,
        }
    }

    pub fn read_byte(&self, space: AddressSpace, addr: u64) -> u8 {
        self.space(space).get(&addr).copied().unwrap_or(0)
    }

    pub fn read_varnode(&self, vn: &Varnode) -> Vec<u8> {
        if vn.is_const() {
            return vn.const_bytes();
        }
        self.read_bytes(vn.space, vn.offset, vn.size as usize)
    }

    pub fn read_bytes(&self, space: AddressSpace, addr: u64, len: usize) -> Vec<u8> {
        (0..len as u64).map(|i| self.read_byte(space, addr.wrapping_add(i))).collect()
    }

    pub fn write_varnode(&mut self, vn: &Varnode, value: &[u8]) -> Result<(), StateError> {
        if vn.is_const() {
            return Err(StateError::WriteToConst(*vn));
        }
        if value.len() != vn.size as usize {
            return Err(StateError::WidthMismatch { vn: *vn, got: value.len() });
        }
        self.write_bytes(vn.space, vn.offset, value);
        Ok(())
    }

    pub fn write_bytes(&mut self, space: AddressSpace, addr: u64, value: &[u8]) {
        let map = self.space_mut(space);
        for (i, b) in value.iter().enumerate() {
            map.insert(addr.wrapping_add(i as u64), *b);
        }
    }

    /// Unsigned value of a varnode, truncated to 64 bits.
    pub fn read_u64(&self, vn: &Varnode) -> u64 {
        from_le(&self.read_varnode(vn)) as u64
    }

    /// Fetches and executes the micro-op at `pc`, updating `pc`.
    pub fn step(&mut self, program: &Program) -> Result<StepOutcome, StateError> {
        let loc = self.pc.ok_or(StateError::NoPc)?;
        let op = program.op_at(loc).ok_or(StateError::NoPc)?;
        self.step_concrete(op, program)
    }

    /// Executes `op` and moves `pc` according to the outcome.
    pub fn step_concrete(&mut self, op: &PcodeOp, program: &Program) -> Result<StepOutcome, StateError> {
        let outcome = self.exec(op, program)?;
        self.pc = match outcome {
            StepOutcome::Continue(next) => Some(next),
            _ => None,
        };
        Ok(outcome)
    }

    fn exec(&mut self, op: &PcodeOp, program: &Program) -> Result<StepOutcome, StateError> {
        if self.step_count >= self.step_budget {
            return Ok(StepOutcome::Fault(FaultKind::Budget));
        }
        self.step_count += 1;
        let fallthrough = || fallthrough(program, op.location);
        let cont = |next: Option<Location>| match next {
            Some(l) => StepOutcome::Continue(l),
            None => StepOutcome::Fault(FaultKind::UnmappedTarget),
        };
        match op.opcode {
            Opcode::Load => {
                let addr = self.read_u64(&op.inputs[0]);
                let out = op.output.expect("validated LOAD has an output");
                let bytes = self.read_bytes(AddressSpace::Ram, addr, out.size as usize);
                self.write_varnode(&out, &bytes)?;
                Ok(cont(fallthrough()))
            }
            Opcode::Store => {
                let addr = self.read_u64(&op.inputs[0]);
                let value = self.read_varnode(&op.inputs[1]);
                self.write_bytes(AddressSpace::Ram, addr, &value);
                Ok(cont(fallthrough()))
            }
            Opcode::Branch => Ok(branch_to(program, op, &op.inputs[0])),
            Opcode::CBranch => {
                if self.read_varnode(&op.inputs[1])[0] != 0 {
                    Ok(branch_to(program, op, &op.inputs[0]))
                } else {
                    Ok(cont(fallthrough()))
                }
            }
            Opcode::BranchInd => Ok(transfer(program, self.read_u64(&op.inputs[0]))),
            Opcode::Call | Opcode::CallInd => {
                let target = match op.opcode {
                    Opcode::Call => op.inputs[0].offset,
                    _ => self.read_u64(&op.inputs[0]),
                };
                let outcome = transfer(program, target);
                if let StepOutcome::Continue(_) = outcome {
                    self.call_stack.push(fallthrough());
                }
                Ok(outcome)
            }
            Opcode::Return => match self.call_stack.pop() {
                None => Ok(StepOutcome::Halt),
                Some(next) => Ok(cont(next)),
            },
            _ => {
                let inputs: Vec<Vec<u8>> = op.inputs.iter().map(|v| self.read_varnode(v)).collect();
                let refs: Vec<&[u8]> = inputs.iter().map(Vec::as_slice).collect();
                let out = op.output.expect("validated pure op has an output");
                match eval_concrete(op.opcode, &refs, out.size as usize) {
                    Ok(v) => self.write_varnode(&out, &v)?,
                    Err(EvalError::DivideByZero(_)) => return Ok(StepOutcome::Fault(FaultKind::DivideByZero)),
                    Err(e) => return Err(e.into()),
                }
                Ok(cont(fallthrough()))
            }
        }
    }
}

/// Next micro-op in program order: the following micro-op of the same
/// instruction, else the first micro-op of the next instruction.
pub fn fallthrough(program: &Program, loc: Location) -> Option<Location> {
    let len = program.instructions.get(&loc.addr)?.len();
    if (loc.micro as usize) + 1 < len {
        return Some(Location::new(loc.addr, loc.micro + 1));
    }
    program.next_instruction(loc.addr).map(|a| Location::new(a, 0))
}

/// Location a taken BRANCH/CBRANCH goes to, or `None` if it leaves the
/// program; panic targets are reported separately by [`branch_to`].
pub fn branch_destination(program: &Program, op: &PcodeOp, target: &Varnode) -> Option<Location> {
    if is_internal_pcode_target(target) {
        let len = program.instructions.get(&op.location.addr)?.len();
        let idx = internal_target_index(op, target)?;
        if idx < len {
            Some(Location::new(op.location.addr, idx as u16))
        } else if idx == len {
            program.next_instruction(op.location.addr).map(|a| Location::new(a, 0))
        } else {
            None
        }
    } else {
        program.instructions.contains_key(&target.offset).then(|| Location::new(target.offset, 0))
    }
}

fn branch_to(program: &Program, op: &PcodeOp, target: &Varnode) -> StepOutcome {
    if is_internal_pcode_target(target) {
        match branch_destination(program, op, target) {
            Some(l) => StepOutcome::Continue(l),
            None => StepOutcome::Fault(FaultKind::UnmappedTarget),
        }
    } else {
        transfer(program, target.offset)
    }
}

fn transfer(program: &Program, addr: u64) -> StepOutcome {
    if program.is_panic(addr) {
        StepOutcome::PanicReached(addr)
    } else if program.instructions.contains_key(&addr) {
        StepOutcome::Continue(Location::new(addr, 0))
    } else {
        StepOutcome::Fault(FaultKind::UnmappedTarget)
    }
}

/// Runs from `pc` until a terminal outcome.
pub fn run_to_end(state: &mut MachineState, program: &Program) -> Result<StepOutcome, StateError> {
    loop {
        match state.step(program)? {
            StepOutcome::Continue(_) => {}
            terminal => return Ok(terminal),
        }
    }
}
