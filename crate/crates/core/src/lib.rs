pub mod error;
pub mod rational;
pub mod space;
pub mod step;
pub mod measure;
pub mod map;
pub mod joint;
pub mod kernel;
pub mod conditioning;
pub mod regularity;
pub mod random;
pub mod bayes;
pub mod bayesnet;
pub mod sequential;
pub mod verify;
