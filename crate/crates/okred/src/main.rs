fn main() {
    println!("okred");
}
