//! Reference frames, Lipschitz charts, atlases and the shape library.

pub mod atlas;
pub mod chart;
pub mod frame;
pub mod index;
pub mod shapes;
pub mod specfile;
pub mod transition;

pub use atlas::{make_shape, DomainAtlas, LipschitzCharacteristic};
pub use chart::{ChartFn, ChartJet, LevelSet, LipschitzChart};
pub use frame::{Point, ReferenceFrame, Tangent, TangentMatrix};
pub use shapes::{parse_shape_arg, BoundaryModel, ShapeParams};
pub use specfile::{load_spec, load_spec_file, parse_spec, DomainSpec};
