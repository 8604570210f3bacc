pub mod ef;
