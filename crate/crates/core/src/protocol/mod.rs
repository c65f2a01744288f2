//! Classical-channel protocol between Alice and Bob.

pub mod frame;
pub mod session;
pub mod transport;

pub use frame::{decode_frame, encode_frame, read_frame, write_frame, FrameError, MessageBody, MessageType};
pub use session::{run_alice, run_bob, run_session, SessionError, SessionRecord};
pub use transport::{loopback_pair, LoopbackEnd, Recording, Transport, WireLog};
