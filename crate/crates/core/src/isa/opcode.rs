use std::fmt;

/// Syntactic operand kinds. Each names the [`super::Instr`] slot it fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    /// Integer register into `rd`.
    Xd,
    /// Integer register into `rs1`.
    Xs1,
    /// Integer register into `rs2`.
    Xs2,
    Fd,
    Fs1,
    Fs2,
    Vd,
    Vs1,
    Vs2,
    /// Signed 32-bit immediate into `imm`.
    Imm,
    /// Shift amount in [0, 31] into `imm`.
    Shamt,
    /// `offset(xN)`: offset into `imm`, base into `rs1`.
    Mem,
    /// `(xN)`: base into `rs1`.
    VBase,
    /// Label resolved to an instruction index, stored in `imm`.
    Label,
    /// Element width tag; only `e32` exists.
    Ew,
    /// The `vl` CSR name.
    CsrVl,
    /// `split` or `merge <core>`, stored in `imm`.
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpClass {
    Scalar,
    Vector,
}

macro_rules! opcodes {
    ($( $variant:ident = $mnemonic:literal, $class:ident, [$($operand:ident),*]; )*) => {
        /// Closed set of mnemonics understood by the assembler and the simulator.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Opcode {
            $($variant,)*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$variant,)*];

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $(Opcode::$variant => $mnemonic,)*
                }
            }

            pub fn class(self) -> OpClass {
                match self {
                    $(Opcode::$variant => OpClass::$class,)*
                }
            }

            pub fn operands(self) -> &'static [Operand] {
                match self {
                    $(Opcode::$variant => &[$(Operand::$operand),*],)*
                }
            }

            pub fn from_mnemonic(s: &str) -> Option<Opcode> {
                match s {
                    $($mnemonic => Some(Opcode::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

opcodes! {
    Li = "li", Scalar, [Xd, Imm];
    Mv = "mv", Scalar, [Xd, Xs1];
    Add = "add", Scalar, [Xd, Xs1, Xs2];
    Addi = "addi", Scalar, [Xd, Xs1, Imm];
    Sub = "sub", Scalar, [Xd, Xs1, Xs2];
    Mul = "mul", Scalar, [Xd, Xs1, Xs2];
    And = "and", Scalar, [Xd, Xs1, Xs2];
    Or = "or", Scalar, [Xd, Xs1, Xs2];
    Xor = "xor", Scalar, [Xd, Xs1, Xs2];
    Slli = "slli", Scalar, [Xd, Xs1, Shamt];
    Srli = "srli", Scalar, [Xd, Xs1, Shamt];
    Lw = "lw", Scalar, [Xd, Mem];
    Sw = "sw", Scalar, [Xs2, Mem];
    Beq = "beq", Scalar, [Xs1, Xs2, Label];
    Bne = "bne", Scalar, [Xs1, Xs2, Label];
    Blt = "blt", Scalar, [Xs1, Xs2, Label];
    Bge = "bge", Scalar, [Xs1, Xs2, Label];
    Jal = "jal", Scalar, [Xd, Label];
    Jalr = "jalr", Scalar, [Xd, Xs1, Imm];
    Csrr = "csrr", Scalar, [Xd, CsrVl];
    FaddS = "fadd.s", Scalar, [Fd, Fs1, Fs2];
    FmulS = "fmul.s", Scalar, [Fd, Fs1, Fs2];
    Flw = "flw", Scalar, [Fd, Mem];
    Fsw = "fsw", Scalar, [Fs2, Mem];
    FenceVec = "fence.vec", Scalar, [];
    Barrier = "barrier", Scalar, [];
    ModeSwitch = "modeswitch", Scalar, [Mode];
    Halt = "halt", Scalar, [];
    Nop = "nop", Scalar, [];

    Vsetvli = "vsetvli", Vector, [Xd, Xs1, Ew];
    Vle32 = "vle32.v", Vector, [Vd, VBase];
    Vse32 = "vse32.v", Vector, [Vs2, VBase];
    Vlse32 = "vlse32.v", Vector, [Vd, VBase, Imm];
    Vsse32 = "vsse32.v", Vector, [Vs2, VBase, Imm];
    VaddVV = "vadd.vv", Vector, [Vd, Vs2, Vs1];
    VsubVV = "vsub.vv", Vector, [Vd, Vs2, Vs1];
    VmulVV = "vmul.vv", Vector, [Vd, Vs2, Vs1];
    VmaccVV = "vmacc.vv", Vector, [Vd, Vs1, Vs2];
    VaddVX = "vadd.vx", Vector, [Vd, Vs2, Xs1];
    VmulVX = "vmul.vx", Vector, [Vd, Vs2, Xs1];
    VfaddVV = "vfadd.vv", Vector, [Vd, Vs2, Vs1];
    VfsubVV = "vfsub.vv", Vector, [Vd, Vs2, Vs1];
    VfmulVV = "vfmul.vv", Vector, [Vd, Vs2, Vs1];
    VfmaccVV = "vfmacc.vv", Vector, [Vd, Vs1, Vs2];
    VfmulVF = "vfmul.vf", Vector, [Vd, Vs2, Fs1];
    VmvVX = "vmv.v.x", Vector, [Vd, Xs1];
    VfmvVF = "vfmv.v.f", Vector, [Vd, Fs1];
    VredsumVS = "vredsum.vs", Vector, [Vd, Vs2, Vs1];
    VfredsumVS = "vfredsum.vs", Vector, [Vd, Vs2, Vs1];
    VmaxVX = "vmax.vx", Vector, [Vd, Vs2, Xs1];
}

impl Opcode {
    pub fn is_scalar_mem(self) -> bool {
        matches!(self, Opcode::Lw | Opcode::Sw | Opcode::Flw | Opcode::Fsw)
    }

    pub fn is_vector_mem(self) -> bool {
        matches!(self, Opcode::Vle32 | Opcode::Vse32 | Opcode::Vlse32 | Opcode::Vsse32)
    }

    pub fn is_reduction(self) -> bool {
        matches!(self, Opcode::VredsumVS | Opcode::VfredsumVS)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}
